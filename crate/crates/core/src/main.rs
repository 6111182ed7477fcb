fn main() {
    std::process::exit(apr_audit::cli::run(std::env::args_os()));
}
