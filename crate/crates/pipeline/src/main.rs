fn main() {
    std::process::exit(causalnet_pipeline::cli::main_with_args(std::env::args_os()));
}
