fn main() {
    std::process::exit(poisonbench::run_cli());
}
