fn main() {
    std::process::exit(bdloss::cli::run(std::env::args_os()));
}
