fn main() {
    std::process::exit(entfact::cli::main());
}
