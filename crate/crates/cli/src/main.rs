fn main() {
    std::process::exit(demaudit_cli::run(std::env::args_os()));
}
