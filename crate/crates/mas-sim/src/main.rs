fn main() {
    std::process::exit(mas_sim::cli::main_entry(std::env::args_os()));
}
