fn main() -> std::process::ExitCode {
    manifold_lab::cli::main_entry()
}
