fn main() {
    std::process::exit(ising_cavity::cli::run(std::env::args_os()));
}
