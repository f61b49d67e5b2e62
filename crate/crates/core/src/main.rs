fn main() {
    std::process::exit(spikerf::cli::run_cli(std::env::args_os()));
}
