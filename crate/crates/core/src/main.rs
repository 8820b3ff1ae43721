fn main() {
    std::process::exit(drrbfpu::cli::run(std::env::args_os()));
}
