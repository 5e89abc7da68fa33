fn main() {
    std::process::exit(drivadv_cli::run(std::env::args_os()));
}
