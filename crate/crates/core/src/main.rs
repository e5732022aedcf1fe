fn main() {
    std::process::exit(histloss::cli::run());
}
