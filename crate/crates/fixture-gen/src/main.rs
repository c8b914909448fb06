use std::path::PathBuf;
use std::process::ExitCode;

fn main() -> ExitCode {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("fixtures/tariff"));
    let seed = match args.next().map(|s| s.parse::<u64>()) {
        None => opinionflow_fixture_gen::DEFAULT_SEED,
        Some(Ok(seed)) => seed,
        Some(Err(e)) => {
            eprintln!("invalid seed: {e}");
            return ExitCode::from(2);
        }
    };
    match opinionflow_fixture_gen::generate(&out, seed) {
        Ok(g) => {
            println!(
                "wrote {} posts on {} pages and {} scripted replies to {}",
                g.posts,
                g.pages,
                g.responses,
                out.display()
            );
            println!("crawl diagnostics: {:?}", g.diagnostics);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("fixture generation failed: {e}");
            ExitCode::FAILURE
        }
    }
}
