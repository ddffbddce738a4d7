fn main() {
    std::process::exit(modeswitch::cli::main_with(std::env::args_os()));
}
