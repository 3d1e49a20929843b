fn main() {
    std::process::exit(elasticity::cli::main(std::env::args_os()));
}
