fn main() -> std::process::ExitCode {
    jqf_sim::cli::main()
}
