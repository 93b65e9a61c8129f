fn main() {
    std::process::exit(rtoverlap::cli::main());
}
