fn main() -> std::process::ExitCode {
    discrete_fpca::cli::main()
}
