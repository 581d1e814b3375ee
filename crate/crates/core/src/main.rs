fn main() {
    std::process::exit(filament::cli::run(std::env::args_os()));
}
