fn main() {
    let outcome = pactkit::cli::run(std::env::args_os());
    print!("{}", outcome.stdout);
    if let Some(message) = &outcome.message {
        eprintln!("{}", message.trim_end());
    }
    std::process::exit(outcome.code);
}
