fn main() {
    std::process::exit(levelset::cli::run(std::env::args_os()));
}
