fn main() {
    std::process::exit(mnilab::cli::dispatch(std::env::args_os()));
}
