use clap::error::ErrorKind;
use clap::Parser;
use mono4d::cli::{run, Cli};
use mono4d::error::Category;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("error[{}]: {first}", Category::Usage.name());
            eprint!("{}", rendered.lines().skip(1).map(|l| format!("{l}\n")).collect::<String>());
            std::process::exit(Category::Usage.exit_code());
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("{}", e.report_line());
        std::process::exit(e.category().exit_code());
    }
}
