fn main() {
    std::process::exit(dbc::cli::main());
}
