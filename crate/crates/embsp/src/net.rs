//! Collective operations between real processors over TCP.
//!
//! Every pair of ranks shares one stream. A frame is a type byte, a
//! little-endian `u64` payload length and the payload.

use std::io::{Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use embsp_core::ReduceOp;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EMBS";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
enum Kind {
    Barrier = 1,
    Bcast = 2,
    Gather = 3,
    Alltoall = 4,
    Reduce = 5,
}

/// Operation and traffic counts.
#[derive(Debug, Default)]
pub struct NetStats {
    barrier: AtomicU64,
    bcast: AtomicU64,
    gather: AtomicU64,
    alltoall: AtomicU64,
    reduce: AtomicU64,
    reduce_rounds: AtomicU64,
    bytes_sent: AtomicU64,
    bytes_received: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NetSnapshot {
    pub barrier: u64,
    pub bcast: u64,
    pub gather: u64,
    pub alltoall: u64,
    pub reduce: u64,
    /// Tree rounds taken by this rank's reduce calls.
    pub reduce_rounds: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
}

impl std::ops::Sub for NetSnapshot {
    type Output = NetSnapshot;
    fn sub(self, o: NetSnapshot) -> NetSnapshot {
        NetSnapshot {
            barrier: self.barrier - o.barrier,
            bcast: self.bcast - o.bcast,
            gather: self.gather - o.gather,
            alltoall: self.alltoall - o.alltoall,
            reduce: self.reduce - o.reduce,
            reduce_rounds: self.reduce_rounds - o.reduce_rounds,
            bytes_sent: self.bytes_sent - o.bytes_sent,
            bytes_received: self.bytes_received - o.bytes_received,
        }
    }
}

impl NetStats {
    pub fn snapshot(&self) -> NetSnapshot {
        let l = |a: &AtomicU64| a.load(Ordering::Relaxed);
        NetSnapshot {
            barrier: l(&self.barrier),
            bcast: l(&self.bcast),
            gather: l(&self.gather),
            alltoall: l(&self.alltoall),
            reduce: l(&self.reduce),
            reduce_rounds: l(&self.reduce_rounds),
            bytes_sent: l(&self.bytes_sent),
            bytes_received: l(&self.bytes_received),
        }
    }

    fn count(&self, kind: Kind) {
        let c = match kind {
            Kind::Barrier => &self.barrier,
            Kind::Bcast => &self.bcast,
            Kind::Gather => &self.gather,
            Kind::Alltoall => &self.alltoall,
            Kind::Reduce => &self.reduce,
        };
        c.fetch_add(1, Ordering::Relaxed);
    }
}

/// Closes every connection of a transport from another thread.
#[derive(Clone)]
pub struct NetKiller(Arc<Vec<TcpStream>>);

impl NetKiller {
    pub fn kill(&self) {
        for s in self.0.iter() {
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}

pub struct Transport {
    rank: usize,
    size: usize,
    peers: Vec<Option<TcpStream>>,
    stats: Arc<NetStats>,
    killer: NetKiller,
}

fn net_err(what: &str, e: std::io::Error) -> Error {
    Error::Net(format!("{what}: {e}"))
}

impl Transport {
    /// A single-rank transport; every collective is local.
    pub fn loopback() -> Self {
        Transport { rank: 0, size: 1, peers: vec![None], stats: Arc::default(), killer: NetKiller(Arc::new(Vec::new())) }
    }

    /// Binds `hosts[rank]` and connects to every other rank.
    pub fn connect(rank: usize, hosts: &[String], timeout: Duration) -> Result<Self> {
        if hosts.len() <= 1 {
            return Ok(Self::loopback());
        }
        let listener = TcpListener::bind(&hosts[rank]).map_err(|e| net_err(&format!("binding {}", hosts[rank]), e))?;
        Self::connect_with(rank, hosts, listener, timeout)
    }

    /// Like [`Transport::connect`] with an already bound listener.
    pub fn connect_with(rank: usize, hosts: &[String], listener: TcpListener, timeout: Duration) -> Result<Self> {
        let size = hosts.len();
        let deadline = Instant::now() + timeout;
        let mut peers: Vec<Option<TcpStream>> = (0..size).map(|_| None).collect();
        for (j, host) in hosts.iter().enumerate().take(rank) {
            let addr = host
                .to_socket_addrs()
                .map_err(|e| net_err(&format!("resolving {host}"), e))?
                .next()
                .ok_or_else(|| Error::Net(format!("no address for {host}")))?;
            let mut stream = loop {
                match TcpStream::connect_timeout(&addr, Duration::from_millis(500)) {
                    Ok(s) => break s,
                    Err(e) if Instant::now() < deadline => {
                        let _ = e;
                        std::thread::sleep(Duration::from_millis(20));
                    }
                    Err(e) => return Err(net_err(&format!("connecting to rank {j} at {host}"), e)),
                }
            };
            stream.set_nodelay(true).map_err(|e| net_err("configuring socket", e))?;
            stream.write_all(MAGIC).map_err(|e| net_err("handshake", e))?;
            stream.write_all(&(rank as u32).to_le_bytes()).map_err(|e| net_err("handshake", e))?;
            peers[j] = Some(stream);
        }
        listener.set_nonblocking(true).map_err(|e| net_err("configuring listener", e))?;
        let mut pending = size - rank - 1;
        while pending > 0 {
            match listener.accept() {
                Ok((mut stream, _)) => {
                    stream.set_nonblocking(false).map_err(|e| net_err("configuring socket", e))?;
                    stream.set_nodelay(true).map_err(|e| net_err("configuring socket", e))?;
                    let mut hs = [0u8; 8];
                    stream.read_exact(&mut hs).map_err(|e| net_err("handshake", e))?;
                    if &hs[..4] != MAGIC {
                        return Err(Error::Net("handshake from an unknown peer".into()));
                    }
                    let j = u32::from_le_bytes(hs[4..].try_into().unwrap()) as usize;
                    if j <= rank || j >= size || peers[j].is_some() {
                        return Err(Error::Net(format!("unexpected handshake from rank {j}")));
                    }
                    peers[j] = Some(stream);
                    pending -= 1;
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Err(Error::Net(format!("rank {rank}: timed out waiting for {pending} peer(s)")));
                    }
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(net_err("accepting", e)),
            }
        }
        let clones = peers
            .iter()
            .flatten()
            .map(|s| s.try_clone().map_err(|e| net_err("cloning socket", e)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Transport { rank, size, peers, stats: Arc::default(), killer: NetKiller(Arc::new(clones)) })
    }

    /// `p` fully connected transports on loopback ports, for in-process runs.
    pub fn local_cluster(p: usize) -> Result<Vec<Transport>> {
        if p == 1 {
            return Ok(vec![Self::loopback()]);
        }
        let listeners = (0..p)
            .map(|_| TcpListener::bind("127.0.0.1:0").map_err(|e| net_err("binding loopback", e)))
            .collect::<Result<Vec<_>>>()?;
        let hosts: Vec<String> =
            listeners.iter().map(|l| l.local_addr().map(|a| a.to_string())).collect::<std::io::Result<_>>().map_err(|e| net_err("local address", e))?;
        std::thread::scope(|s| {
            let handles: Vec<_> = listeners
                .into_iter()
                .enumerate()
                .map(|(r, l)| {
                    let hosts = hosts.clone();
                    s.spawn(move || Transport::connect_with(r, &hosts, l, Duration::from_secs(30)))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("connect thread panicked")).collect()
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn stats(&self) -> Arc<NetStats> {
        Arc::clone(&self.stats)
    }

    pub fn killer(&self) -> NetKiller {
        self.killer.clone()
    }

    fn peer(&mut self, j: usize) -> &mut TcpStream {
        self.peers[j].as_mut().expect("no stream to self")
    }

    fn send(&mut self, j: usize, kind: Kind, payload: &[u8]) -> Result<()> {
        let s = self.peer(j);
        write_frame(s, kind, payload)?;
        self.stats.bytes_sent.fetch_add(payload.len() as u64 + 9, Ordering::Relaxed);
        Ok(())
    }

    fn recv(&mut self, j: usize, kind: Kind) -> Result<Vec<u8>> {
        let s = self.peer(j);
        let data = read_frame(s, kind)?;
        self.stats.bytes_received.fetch_add(data.len() as u64 + 9, Ordering::Relaxed);
        Ok(data)
    }

    pub fn barrier(&mut self) -> Result<()> {
        self.stats.count(Kind::Barrier);
        if self.size == 1 {
            return Ok(());
        }
        if self.rank == 0 {
            for j in 1..self.size {
                self.recv(j, Kind::Barrier)?;
            }
            for j in 1..self.size {
                self.send(j, Kind::Barrier, &[])?;
            }
        } else {
            self.send(0, Kind::Barrier, &[])?;
            self.recv(0, Kind::Barrier)?;
        }
        Ok(())
    }

    /// Root sends `data`; everyone else has it replaced by the root's bytes.
    pub fn bcast(&mut self, root: usize, data: &mut Vec<u8>) -> Result<()> {
        self.stats.count(Kind::Bcast);
        if self.size == 1 {
            return Ok(());
        }
        if self.rank == root {
            for j in (0..self.size).filter(|&j| j != root) {
                self.send(j, Kind::Bcast, data)?;
            }
        } else {
            *data = self.recv(root, Kind::Bcast)?;
        }
        Ok(())
    }

    /// Root receives every rank's bytes in rank order.
    pub fn gather(&mut self, root: usize, data: &[u8]) -> Result<Option<Vec<Vec<u8>>>> {
        self.stats.count(Kind::Gather);
        if self.rank != root {
            self.send(root, Kind::Gather, data)?;
            return Ok(None);
        }
        let mut out = Vec::with_capacity(self.size);
        for j in 0..self.size {
            if j == root {
                out.push(data.to_vec());
            } else {
                out.push(self.recv(j, Kind::Gather)?);
            }
        }
        Ok(Some(out))
    }

    /// Sends `out[j]` to rank `j` and returns what every rank sent here.
    pub fn alltoall(&mut self, mut out: Vec<Vec<u8>>) -> Result<Vec<Vec<u8>>> {
        assert_eq!(out.len(), self.size, "one outgoing buffer per rank");
        self.stats.count(Kind::Alltoall);
        let mut incoming: Vec<Vec<u8>> = vec![Vec::new(); self.size];
        incoming[self.rank] = std::mem::take(&mut out[self.rank]);
        if self.size == 1 {
            return Ok(incoming);
        }
        let rank = self.rank;
        let mut writers = Vec::new();
        for (j, buf) in out.into_iter().enumerate() {
            if j != rank {
                let s = self.peers[j].as_ref().unwrap().try_clone().map_err(|e| net_err("cloning socket", e))?;
                writers.push((s, buf));
            }
        }
        let sent: u64 = writers.iter().map(|(_, b)| b.len() as u64 + 9).sum();
        let results: Result<()> = std::thread::scope(|scope| {
            let handles: Vec<_> = writers
                .into_iter()
                .map(|(mut s, buf)| scope.spawn(move || write_frame(&mut s, Kind::Alltoall, &buf)))
                .collect();
            let mut first_err = None;
            for j in (0..self.size).filter(|&j| j != rank) {
                match self.recv(j, Kind::Alltoall) {
                    Ok(d) => incoming[j] = d,
                    Err(e) => {
                        self.killer.kill();
                        first_err.get_or_insert(e);
                        break;
                    }
                }
            }
            for h in handles {
                if let Err(e) = h.join().expect("writer thread panicked") {
                    first_err.get_or_insert(e);
                }
            }
            first_err.map_or(Ok(()), Err)
        });
        results?;
        self.stats.bytes_sent.fetch_add(sent, Ordering::Relaxed);
        Ok(incoming)
    }

    /// Binomial-tree reduction to `root`; returns the result there.
    pub fn reduce(&mut self, root: usize, mut acc: Vec<u8>, op: &ReduceOp) -> Result<Option<Vec<u8>>> {
        self.stats.count(Kind::Reduce);
        let p = self.size;
        let rel = (self.rank + p - root) % p;
        let mut mask = 1;
        let mut rounds = 0;
        while mask < p {
            rounds += 1;
            if rel & mask != 0 {
                let to = (rel - mask + root) % p;
                self.send(to, Kind::Reduce, &acc)?;
                break;
            }
            if rel + mask < p {
                let from = (rel + mask + root) % p;
                let part = self.recv(from, Kind::Reduce)?;
                if part.len() != acc.len() {
                    return Err(Error::Protocol(format!(
                        "reduce operand length mismatch: {} vs {} bytes",
                        part.len(),
                        acc.len()
                    )));
                }
                op.combine(&mut acc, &part);
            }
            mask <<= 1;
        }
        self.stats.reduce_rounds.fetch_add(rounds, Ordering::Relaxed);
        Ok((self.rank == root).then_some(acc))
    }
}

fn write_frame(s: &mut TcpStream, kind: Kind, payload: &[u8]) -> Result<()> {
    let mut head = [0u8; 9];
    head[0] = kind as u8;
    head[1..].copy_from_slice(&(payload.len() as u64).to_le_bytes());
    s.write_all(&head).and_then(|_| s.write_all(payload)).map_err(|e| net_err("sending frame", e))
}

fn read_frame(s: &mut TcpStream, kind: Kind) -> Result<Vec<u8>> {
    let mut head = [0u8; 9];
    s.read_exact(&mut head).map_err(|e| net_err("receiving frame", e))?;
    if head[0] != kind as u8 {
        return Err(Error::Protocol(format!(
            "network collective mismatch: expected frame type {} but received {}",
            kind as u8, head[0]
        )));
    }
    let len = u64::from_le_bytes(head[1..].try_into().unwrap()) as usize;
    let mut data = vec![0u8; len];
    s.read_exact(&mut data).map_err(|e| net_err("receiving frame", e))?;
    Ok(data)
}
