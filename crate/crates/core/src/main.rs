fn main() {
    std::process::exit(bundle_ce::harness::run_cli(std::env::args_os()));
}
