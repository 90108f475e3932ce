use clap::Parser;
use esml::{execute, Args, EXIT_INVALID};

fn main() {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    std::process::exit(execute(&args));
}
