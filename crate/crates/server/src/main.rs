use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;

use coexplore_server::{app, AppState, ServerConfig};

#[derive(Parser)]
#[command(name = "coexplore-server", version, about = "Live co-robotic exploration sessions over HTTP")]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Directory for the traces of finished sessions.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let args = Args::parse();
    if let Some(dir) = &args.trace_dir {
        std::fs::create_dir_all(dir)?;
    }
    let listener = tokio::net::TcpListener::bind(args.addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app(AppState::new(ServerConfig { trace_dir: args.trace_dir }))).await
}
