use std::io::Write;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (code, stdout, stderr) = annobias::cli::main_with(args);
    if let Some(text) = stdout {
        let _ = std::io::stdout().write_all(text.as_bytes());
    }
    if let Some(text) = stderr {
        let _ = std::io::stderr().write_all(text.as_bytes());
    }
    std::process::exit(code);
}
