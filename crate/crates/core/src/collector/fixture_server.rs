//! Local HTTP server that speaks the search endpoint's page protocol.
//!
//! Pages come from a [`PageSource`]; a [`FaultPlan`] can make specific
//! page requests fail a given number of times (HTTP 500 or a garbage body)
//! before the real page is served. Every request is logged so tests can
//! check pagination bounds and retry behavior.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use tiny_http::{Header, Response, Server};

use super::page::render_page;
use super::plan::HourSegment;
use super::transport::{parse_timescope, FixtureDirTransport};

pub trait PageSource: Send + Sync + 'static {
    fn page(&self, segment: &HourSegment, page: u32) -> Option<String>;
}

/// Serves a fixture directory (same layout as [`FixtureDirTransport`]).
#[derive(Debug, Clone)]
pub struct DirPageSource(pub PathBuf);

impl PageSource for DirPageSource {
    fn page(&self, segment: &HourSegment, page: u32) -> Option<String> {
        FixtureDirTransport::read_page(&self.0, segment, page)
            .ok()
            .flatten()
    }
}

#[derive(Debug, Clone, Default)]
pub struct MemoryPageSource {
    pages: BTreeMap<(HourSegment, u32), String>,
}

impl MemoryPageSource {
    pub fn insert(&mut self, segment: HourSegment, page: u32, body: String) {
        self.pages.insert((segment, page), body);
    }
}

impl PageSource for MemoryPageSource {
    fn page(&self, segment: &HourSegment, page: u32) -> Option<String> {
        self.pages.get(&(*segment, page)).cloned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InjectedFault {
    Status(u16),
    /// 200 OK with a body that is not a result page.
    Garbage,
}

#[derive(Debug, Clone, Default)]
pub struct FaultPlan {
    faults: HashMap<(HourSegment, u32), VecDeque<InjectedFault>>,
}

impl FaultPlan {
    pub fn fail(&mut self, segment: HourSegment, page: u32, fault: InjectedFault) {
        self.faults.entry((segment, page)).or_default().push_back(fault);
    }

    fn take(&mut self, segment: HourSegment, page: u32) -> Option<InjectedFault> {
        self.faults.get_mut(&(segment, page))?.pop_front()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServedRequest {
    pub segment: Option<HourSegment>,
    pub page: u32,
    pub query: String,
    pub user_agent: String,
    pub status: u16,
}

pub struct FixtureServer {
    addr: SocketAddr,
    server: Arc<Server>,
    log: Arc<Mutex<Vec<ServedRequest>>>,
    worker: Option<JoinHandle<()>>,
}

/// A localhost listener whose accepted sockets have Nagle disabled.
/// tiny_http flushes headers before a large body, and with Nagle on each
/// page would wait out the client's delayed ACK.
fn nodelay_listener() -> io::Result<std::net::TcpListener> {
    let socket = socket2::Socket::new(socket2::Domain::IPV4, socket2::Type::STREAM, None)?;
    socket.set_nodelay(true)?;
    socket.bind(&SocketAddr::from(([127, 0, 0, 1], 0)).into())?;
    socket.listen(128)?;
    Ok(socket.into())
}

impl FixtureServer {
    /// Binds an ephemeral localhost port and starts serving.
    pub fn start(source: impl PageSource, faults: FaultPlan) -> io::Result<Self> {
        let server = Server::from_listener(nodelay_listener()?, None).map_err(io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| io::Error::other("server is not bound to an IP address"))?;
        let server = Arc::new(server);
        let log = Arc::new(Mutex::new(Vec::new()));
        let worker = {
            let server = Arc::clone(&server);
            let log = Arc::clone(&log);
            let faults = Mutex::new(faults);
            thread::spawn(move || {
                for request in server.incoming_requests() {
                    handle(&source, &faults, &log, request);
                }
            })
        };
        Ok(Self {
            addr,
            server,
            log,
            worker: Some(worker),
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> Vec<ServedRequest> {
        self.log.lock().unwrap().clone()
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

fn handle(
    source: &dyn PageSource,
    faults: &Mutex<FaultPlan>,
    log: &Mutex<Vec<ServedRequest>>,
    request: tiny_http::Request,
) {
    let query_string = request
        .url()
        .split_once('?')
        .map(|(_, q)| q.to_string())
        .unwrap_or_default();
    let params: HashMap<String, String> = url::form_urlencoded::parse(query_string.as_bytes())
        .into_owned()
        .collect();
    let user_agent = request
        .headers()
        .iter()
        .find(|h| h.field.equiv("User-Agent"))
        .map(|h| h.value.to_string())
        .unwrap_or_default();
    let segment = params.get("timescope").and_then(|v| parse_timescope(v));
    let page = params
        .get("page")
        .and_then(|p| p.parse().ok())
        .unwrap_or(1);
    let query = params.get("q").cloned().unwrap_or_default();

    let html = Header::from_bytes("Content-Type", "text/html; charset=utf-8").expect("static header");
    let (status, body) = match segment {
        None => (400, "missing or malformed timescope".to_string()),
        Some(seg) => match faults.lock().unwrap().take(seg, page) {
            Some(InjectedFault::Status(code)) => (code, format!("injected status {code}")),
            Some(InjectedFault::Garbage) => (200, "<html><body>系统繁忙".to_string()),
            None => (
                200,
                source.page(&seg, page).unwrap_or_else(|| render_page(&[])),
            ),
        },
    };
    let response = Response::from_string(body)
        .with_status_code(status)
        .with_header(html);
    // logged before responding so a client that has its answer sees the entry
    log.lock().unwrap().push(ServedRequest {
        segment,
        page,
        query,
        user_agent,
        status,
    });
    let _ = request.respond(response);
}
