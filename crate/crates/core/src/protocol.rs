//! Parent/child execution protocol over a pair of byte streams.
//!
//! All integers are little-endian.
//!
//! ```text
//! child -> parent  handshake  magic u32 0x56504631 ("VPF1"), version u32 = 1, map size u32 = 65536
//! parent -> child  request    length u32, input bytes
//! child -> parent  reply      outcome u8 (0 exit, 1 fault, 2 hang), fault kind u8 (0 if none),
//!                             pc u32, executed u32, 65536 coverage bytes
//! ```
//!
//! For an exit the pc slot carries the exit code. The child stops cleanly
//! when the request stream ends on a frame boundary; anything else is a
//! protocol error.

use std::io::{self, Read, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use crate::coverage::{CoverageMap, MAP_SIZE};
use crate::harness::{Executor, HarnessError};
use crate::machine::{FaultKind, Machine, RunOutcome, Verdict};

pub const MAGIC: u32 = 0x5650_4631;
pub const VERSION: u32 = 1;
/// Largest input a child accepts.
pub const MAX_INPUT: u32 = 16 << 20;
pub const REPLY_HEADER: usize = 10;

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_PROTOCOL: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("stream ended inside a frame")]
    Truncated,
    #[error("input length {0} exceeds the {MAX_INPUT}-byte limit")]
    TooLong(u32),
    #[error("bad handshake: {0}")]
    Handshake(String),
    #[error("bad reply: {0}")]
    Reply(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn handshake_bytes() -> [u8; 12] {
    let mut b = [0u8; 12];
    b[0..4].copy_from_slice(&MAGIC.to_le_bytes());
    b[4..8].copy_from_slice(&VERSION.to_le_bytes());
    b[8..12].copy_from_slice(&(MAP_SIZE as u32).to_le_bytes());
    b
}

pub fn request_bytes(input: &[u8]) -> Vec<u8> {
    let mut b = Vec::with_capacity(4 + input.len());
    b.extend_from_slice(&(input.len() as u32).to_le_bytes());
    b.extend_from_slice(input);
    b
}

/// The fixed-size part of a reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplyHeader {
    pub outcome: u8,
    pub kind: u8,
    pub pc: u32,
    pub executed: u32,
}

impl ReplyHeader {
    pub fn of(outcome: &RunOutcome) -> ReplyHeader {
        let (code, kind, pc) = match outcome.verdict {
            Verdict::Exit { code } => (0, 0, code),
            Verdict::Fault { kind, pc, .. } => (1, kind.code(), pc),
            Verdict::Hang { last_pc } => (2, 0, last_pc),
        };
        ReplyHeader { outcome: code, kind, pc, executed: outcome.executed.min(u32::MAX as u64) as u32 }
    }

    pub fn to_bytes(self) -> [u8; REPLY_HEADER] {
        let mut b = [0u8; REPLY_HEADER];
        b[0] = self.outcome;
        b[1] = self.kind;
        b[2..6].copy_from_slice(&self.pc.to_le_bytes());
        b[6..10].copy_from_slice(&self.executed.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; REPLY_HEADER]) -> ReplyHeader {
        ReplyHeader {
            outcome: b[0],
            kind: b[1],
            pc: u32::from_le_bytes(b[2..6].try_into().unwrap()),
            executed: u32::from_le_bytes(b[6..10].try_into().unwrap()),
        }
    }

    /// The verdict as far as the wire carries it (no fault address).
    pub fn verdict(self) -> Result<Verdict, ProtocolError> {
        match (self.outcome, self.kind) {
            (0, 0) => Ok(Verdict::Exit { code: self.pc }),
            (1, k) => FaultKind::from_code(k)
                .map(|kind| Verdict::Fault { kind, pc: self.pc, address: None })
                .ok_or_else(|| ProtocolError::Reply(format!("unknown fault kind {k}"))),
            (2, 0) => Ok(Verdict::Hang { last_pc: self.pc }),
            (o, k) => Err(ProtocolError::Reply(format!("outcome {o} with kind {k}"))),
        }
    }
}

/// Fills `buf` completely. `Ok(false)` means the stream ended before the
/// first byte.
fn read_frame_part(r: &mut impl Read, buf: &mut [u8]) -> Result<bool, ProtocolError> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) if got == 0 => return Ok(false),
            Ok(0) => return Err(ProtocolError::Truncated),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(true)
}

/// Child side: handshake, then one reply per request until end of stream.
pub fn child_serve(machine: &mut Machine, input: &mut impl Read, output: &mut impl Write) -> Result<(), ProtocolError> {
    output.write_all(&handshake_bytes())?;
    output.flush()?;
    let mut buf = Vec::new();
    loop {
        let mut len = [0u8; 4];
        if !read_frame_part(input, &mut len)? {
            return Ok(());
        }
        let len = u32::from_le_bytes(len);
        if len > MAX_INPUT {
            return Err(ProtocolError::TooLong(len));
        }
        buf.resize(len as usize, 0);
        if len > 0 && !read_frame_part(input, &mut buf)? {
            return Err(ProtocolError::Truncated);
        }
        machine.reset(&buf);
        let outcome = machine.run();
        output.write_all(&ReplyHeader::of(&outcome).to_bytes())?;
        output.write_all(machine.coverage().as_bytes())?;
        output.flush()?;
    }
}

/// Parent side of the protocol around a spawned child process.
pub struct ChildExecutor {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: ChildStdout,
    map: CoverageMap,
    raw: Vec<u8>,
    last: Option<ReplyHeader>,
}

impl ChildExecutor {
    /// Spawns `command` with piped stdin/stdout and checks the handshake.
    pub fn spawn(mut command: Command) -> Result<ChildExecutor, HarnessError> {
        let mut child = command.stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
        let stdin = child.stdin.take();
        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut hs = [0u8; 12];
        let ok = read_frame_part(&mut stdout, &mut hs).map_err(|e| HarnessError::Child(e.to_string()))?;
        if !ok {
            let status = child.wait()?;
            return Err(HarnessError::Child(format!("exited before handshake ({status})")));
        }
        if hs != handshake_bytes() {
            let _ = child.kill();
            return Err(HarnessError::Child(ProtocolError::Handshake(format!("{hs:02x?}")).to_string()));
        }
        Ok(ChildExecutor {
            child,
            stdin,
            stdout,
            map: CoverageMap::default(),
            raw: vec![0; MAP_SIZE],
            last: None,
        })
    }

    /// Header of the most recent reply.
    pub fn last_reply(&self) -> Option<ReplyHeader> {
        self.last
    }

    /// Closes the request stream and waits for the child.
    pub fn finish(mut self) -> io::Result<std::process::ExitStatus> {
        drop(self.stdin.take());
        self.child.wait()
    }

    fn died(&mut self, what: &str) -> HarnessError {
        let status = self.child.try_wait().ok().flatten();
        HarnessError::Child(match status {
            Some(s) => format!("{what}: child exited ({s})"),
            None => format!("{what}: child stopped responding"),
        })
    }
}

impl Executor for ChildExecutor {
    /// The wire carries no consumed-byte count, so the whole input is
    /// reported as consumed.
    fn execute(&mut self, input: &[u8]) -> Result<RunOutcome, HarnessError> {
        let stdin = self.stdin.as_mut().ok_or_else(|| HarnessError::Child("request stream closed".into()))?;
        if stdin.write_all(&request_bytes(input)).and_then(|_| stdin.flush()).is_err() {
            return Err(self.died("sending request"));
        }
        let mut head = [0u8; REPLY_HEADER];
        if !matches!(read_frame_part(&mut self.stdout, &mut head), Ok(true)) {
            return Err(self.died("reading reply"));
        }
        if !matches!(read_frame_part(&mut self.stdout, &mut self.raw), Ok(true)) {
            return Err(self.died("reading coverage"));
        }
        let header = ReplyHeader::from_bytes(&head);
        self.last = Some(header);
        self.map = CoverageMap::from_bytes(&self.raw).expect("map size");
        let verdict = header.verdict().map_err(|e| HarnessError::Child(e.to_string()))?;
        Ok(RunOutcome { verdict, executed: header.executed as u64, consumed: input.len() })
    }

    fn coverage(&self) -> &CoverageMap {
        &self.map
    }
}

impl Drop for ChildExecutor {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::firmware::FW_CAN_TIMER;

    fn machine() -> Machine {
        let (image, cfg) = FW_CAN_TIMER.build();
        Machine::new(&image, &cfg.machine).unwrap()
    }

    #[test]
    fn handshake_layout() {
        assert_eq!(handshake_bytes(), [0x31, 0x46, 0x50, 0x56, 1, 0, 0, 0, 0, 0, 1, 0]);
        assert_eq!(request_bytes(&[0x00]), vec![1, 0, 0, 0, 0]);
    }

    #[test]
    fn serves_until_end_of_stream() {
        let mut m = machine();
        let mut req = request_bytes(&[0x00, 0x01, 0x01, 0x00]);
        req.extend(request_bytes(&[]));
        let mut out = Vec::new();
        child_serve(&mut m, &mut &req[..], &mut out).unwrap();
        assert_eq!(out.len(), 12 + 2 * (REPLY_HEADER + MAP_SIZE));
        let head = ReplyHeader::from_bytes(out[12..22].try_into().unwrap());
        assert_eq!((head.outcome, head.kind), (1, FaultKind::DivideByZero.code()));
        let second = ReplyHeader::from_bytes(out[22 + MAP_SIZE..32 + MAP_SIZE].try_into().unwrap());
        assert_eq!(second.outcome, 2);
    }

    #[test]
    fn malformed_frames_are_errors() {
        let mut m = machine();
        let mut sink = Vec::new();
        assert!(matches!(child_serve(&mut m, &mut &[1u8, 0][..], &mut sink), Err(ProtocolError::Truncated)));
        let mut sink = Vec::new();
        assert!(matches!(child_serve(&mut m, &mut &[4u8, 0, 0, 0, 1][..], &mut sink), Err(ProtocolError::Truncated)));
        let mut sink = Vec::new();
        let huge = (MAX_INPUT + 1).to_le_bytes();
        assert!(matches!(child_serve(&mut m, &mut &huge[..], &mut sink), Err(ProtocolError::TooLong(_))));
    }

    #[test]
    fn reply_header_round_trip() {
        let h = ReplyHeader { outcome: 1, kind: 3, pc: 0x1234, executed: 99 };
        assert_eq!(ReplyHeader::from_bytes(&h.to_bytes()), h);
        assert!(ReplyHeader { outcome: 1, kind: 0, pc: 0, executed: 0 }.verdict().is_err());
    }
}
