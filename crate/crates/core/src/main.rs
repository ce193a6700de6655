fn main() { std::process::exit(carsel::cli::main()) }
