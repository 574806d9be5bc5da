fn main() {
    std::process::exit(dysem::cli::main());
}
