use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(talk2bev_service::cli::run(std::env::args_os()) as u8)
}
