fn main() {
    if let Err(e) = remforge::cli::run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
