fn main() {
    std::process::exit(metasysid::harness::cli_dispatch(std::env::args_os()));
}
