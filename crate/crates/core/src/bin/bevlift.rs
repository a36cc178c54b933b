fn main() {
    std::process::exit(bevlift::cli::main_with(std::env::args_os()));
}
