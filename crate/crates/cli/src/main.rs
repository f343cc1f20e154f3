fn main() {
    std::process::exit(trialrec_cli::run(std::env::args_os()));
}
