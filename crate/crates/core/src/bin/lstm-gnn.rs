fn main() {
    std::process::exit(lstm_gnn::cli::dispatch(std::env::args_os()));
}
