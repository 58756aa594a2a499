fn main() {
    std::process::exit(proxyforge::cli::dispatch(std::env::args_os()));
}
