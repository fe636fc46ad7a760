fn main() {
    std::process::exit(cityhub::cli::main());
}
