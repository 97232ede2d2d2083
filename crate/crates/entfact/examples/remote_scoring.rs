//! Score spans through the HTTP wire protocol: a miniature in-process
//! server answers `POST /v1/score`, and the retrying client consumes it.
//!
//! ```sh
//! cargo run --example remote_scoring
//! ```

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::time::Duration;

use entfact::scorer::{RemoteConfig, RemoteScorer, ScoreQuery, Scorer, ScorerMode};

/// Answers every span query with -0.5 per masked token.
fn spawn_server() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).is_err() || line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0u8; content_length];
            let _ = reader.read_exact(&mut body);
            let request: serde_json::Value = serde_json::from_slice(&body).unwrap();
            let length = request["span"]["length"].as_u64().unwrap_or(1) as usize;
            let json = serde_json::json!({ "step_logprobs": vec![-0.5; length] }).to_string();
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{}",
                json.len(),
                json
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    format!("http://{addr}")
}

fn main() {
    let endpoint = spawn_server();
    println!("scorer listening at {endpoint}");

    let config = RemoteConfig {
        timeout: Duration::from_secs(2),
        max_retries: 2,
        backoff: Duration::from_millis(100),
        ..RemoteConfig::new(endpoint)
    };
    let scorer = RemoteScorer::new(config);

    let toks = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
    let query = ScoreQuery::with_source(
        ScorerMode::Cmlm,
        toks("the council praised the Cardiff bay project"),
        toks("a project at the Cardiff bay"),
        (4, 2),
    );
    let scores = scorer.score(&query).unwrap();
    println!("step log-probs: {:?}", scores.0);
    println!("span log-probability: {:.3}", scores.total());
    println!("span probability:     {:.4}", scores.total().exp());
}
