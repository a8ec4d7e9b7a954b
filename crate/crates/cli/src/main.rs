fn main() {
    std::process::exit(geopump_cli::run(std::env::args_os()));
}
