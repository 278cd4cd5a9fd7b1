fn main() -> std::process::ExitCode {
    qml::cli::main_with_args(std::env::args_os())
}
