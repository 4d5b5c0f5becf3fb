fn main() {
    std::process::exit(sigma_lowrank::pipeline::cli::run(std::env::args_os()));
}
