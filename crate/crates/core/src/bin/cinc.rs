fn main() {
    std::process::exit(contact_inclusion::cli::run(std::env::args_os()));
}
