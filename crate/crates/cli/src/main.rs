fn main() {
    std::process::exit(amazons_cli::dispatch(std::env::args_os()));
}
