fn main() {
    std::process::exit(lowrank_grad::cli::run(std::env::args_os()));
}
