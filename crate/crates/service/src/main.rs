use clap::Parser;
use speaklabel::cli::{run, Cli};
use std::io::Write;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| {
            let line = serde_json::json!({
                "level": record.level().as_str().to_ascii_lowercase(),
                "target": record.target(),
                "message": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        })
        .init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        let line = serde_json::json!({ "level": "error", "kind": e.kind(), "message": e.to_string() });
        eprintln!("{line}");
        std::process::exit(e.exit_code());
    }
}
