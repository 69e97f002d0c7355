fn main() {
    std::process::exit(qmem_array::cli::main_with_args(std::env::args_os()));
}
