fn main() {
    std::process::exit(rsma::cli::main(std::env::args_os()));
}
