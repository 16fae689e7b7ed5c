fn main() {
    std::process::exit(invariance_lab::run());
}
