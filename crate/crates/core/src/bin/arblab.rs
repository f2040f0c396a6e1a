fn main() {
    std::process::exit(arblab::harness::main_from(std::env::args_os()));
}
