fn main() {
    std::process::exit(minkowski_orbits::cli::run(std::env::args_os()));
}
