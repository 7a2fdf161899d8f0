//! Command-line driver and HTTP service.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod service;

use std::net::SocketAddr;
use std::sync::Arc;

use cli::{Cli, Command, ServeArgs};
use config::AppConfig;
use error::{Classify, CliError};

pub fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::Diagnose(args) => commands::diagnose(args),
        Command::Serve(args) => serve(args),
        Command::Synth(args) => commands::synth(args),
    }
}

fn serve(args: &ServeArgs) -> Result<(), CliError> {
    let config = AppConfig::load_optional(args.config.as_deref())?;
    let port = config.port(args.port)?;
    let model = commands::load_model(&args.model)?;
    let report = commands::load_report(&args.report)?;
    if report.classes != model.classes {
        return Err(CliError::usage("report and model disagree on the class table"));
    }
    if let Some(dir) = &args.static_dir {
        if !dir.is_dir() {
            return Err(CliError::usage(format!("static directory {} does not exist", dir.display())));
        }
    }
    let ip = args.host.parse().or_usage(format!("invalid host `{}`", args.host))?;
    let addr = SocketAddr::new(ip, port);
    let app = service::router(Arc::new(service::AppState { model, report }), args.static_dir.clone());

    let runtime =
        tokio::runtime::Builder::new_multi_thread().enable_all().build().or_runtime("cannot start runtime")?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.or_runtime(format!("cannot bind {addr}"))?;
        println!("listening on http://{addr}");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .or_runtime("server failed")
    })
}
