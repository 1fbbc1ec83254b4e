fn main() {
    std::process::exit(z2meson::cli::run(std::env::args_os()));
}
