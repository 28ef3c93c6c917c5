fn main() {
    std::process::exit(ssid_cls::cli::run(std::env::args_os()));
}
