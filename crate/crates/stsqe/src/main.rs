fn main() {
    std::process::exit(stsqe::run());
}
