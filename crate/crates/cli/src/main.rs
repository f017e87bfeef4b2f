fn main() {
    std::process::exit(bifloop::main_with(std::env::args_os()));
}
