fn main() {
    std::process::exit(turtles::cli::main());
}
