fn main() {
    std::process::exit(grpo_ground::cli::run(std::env::args_os()));
}
