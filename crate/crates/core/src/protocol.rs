//! Server/client key agreement.
//!
//! The server keeps, per address, the enrolled response `X_i` at the cells
//! the address selects. On each session it runs the fuzzy extractor over
//! `X_i`, keeps the key, and sends the client an [`Instruction`] plus the
//! helper. The client reads its own cells at those indices and reproduces
//! the key.
//!
//! Messages crossing the server/client boundary are framed as
//! `PUFM | type (u8) | payload length (u32 LE) | payload`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::apg::{self, AddressRequest, CellSelection};
use crate::bits::{BitVector, TernaryVector};
use crate::ecc::{bch_build, CodeSpec};
use crate::enrollment::{enroll, EnrollmentConfig, TernaryChallenge};
use crate::error::{PufError, Result};
use crate::fuzzy::{self, HelperData, Scheme, SecretKey};
use crate::rng::{self, labels};
use crate::sram::{DeviceId, DeviceModel};

const FRAME_MAGIC: &[u8; 4] = b"PUFM";

/// Anything that can produce a fresh power-up read of selected cells.
pub trait ResponseSource: Sync {
    fn cell_count(&self) -> usize;

    /// Cells `indices` of the read identified by `read_seed`, in order.
    fn read_cells(&self, read_seed: u64, indices: &[usize]) -> Result<BitVector>;
}

impl ResponseSource for DeviceModel {
    fn cell_count(&self) -> usize {
        DeviceModel::cell_count(self)
    }

    fn read_cells(&self, read_seed: u64, indices: &[usize]) -> Result<BitVector> {
        DeviceModel::read_cells(self, read_seed, indices)
    }
}

/// Key-generation settings applied at enrollment.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub enrollment: EnrollmentConfig,
    pub scheme: Scheme,
    pub code: CodeSpec,
    pub key_bits: usize,
}

impl ProtocolConfig {
    /// Cells the APG must select: whole code blocks covering the key.
    pub fn cell_budget(&self) -> usize {
        fuzzy::blocks_for(&self.code, self.key_bits) * self.code.n()
    }
}

impl Default for ProtocolConfig {
    /// Code-offset over BCH(255, t = 10), 128-bit key.
    fn default() -> Self {
        ProtocolConfig {
            enrollment: EnrollmentConfig::default(),
            scheme: Scheme::CodeOffset,
            code: bch_build(8, 10).expect("valid BCH parameters"),
            key_bits: 128,
        }
    }
}

/// Public routing data sent to the client: where to read and how to decode.
#[derive(Clone, Debug, PartialEq)]
pub struct Instruction {
    pub address: u64,
    pub selection: CellSelection,
    pub scheme: Scheme,
    pub code: CodeSpec,
    pub key_bits: usize,
}

impl Instruction {
    /// Payload: address (u64), scheme (u8), key bits (u32), code header,
    /// index count (u32), indices (u32 each). Little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.address.to_le_bytes());
        out.push(match self.scheme {
            Scheme::CodeOffset => 0,
            Scheme::Syndrome => 1,
        });
        out.extend_from_slice(&(self.key_bits as u32).to_le_bytes());
        out.extend_from_slice(&self.code.to_bytes());
        out.extend_from_slice(&(self.selection.indices.len() as u32).to_le_bytes());
        for &i in &self.selection.indices {
            out.extend_from_slice(&(i as u32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let bad = |reason: &str| PufError::format("instruction", reason);
        if buf.len() < 13 {
            return Err(bad("truncated"));
        }
        let address = u64::from_le_bytes(buf[..8].try_into().unwrap());
        let scheme = match buf[8] {
            0 => Scheme::CodeOffset,
            1 => Scheme::Syndrome,
            _ => return Err(bad("unknown scheme")),
        };
        let key_bits = u32::from_le_bytes(buf[9..13].try_into().unwrap()) as usize;
        let (code, used) = CodeSpec::from_bytes(&buf[13..])?;
        let mut pos = 13 + used;
        if buf.len() < pos + 4 {
            return Err(bad("truncated"));
        }
        let count = u32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        if buf.len() != pos + 4 * count {
            return Err(bad("index list length disagrees with count"));
        }
        let indices = buf[pos..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        Ok(Instruction {
            address,
            selection: CellSelection {
                indices,
                derived_address: address,
                request: None,
            },
            scheme,
            code,
            key_bits,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SessionOutcome {
    /// Client and server keys are byte-identical.
    Match,
    /// The client's check digest did not match.
    Reject,
    /// The client accepted a key that differs from the server's.
    Mismatch,
}

impl fmt::Display for SessionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionOutcome::Match => "MATCH",
            SessionOutcome::Reject => "REJECT",
            SessionOutcome::Mismatch => "MISMATCH",
        })
    }
}

/// One framed protocol message.
#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Instruction(Instruction),
    Helper(HelperData),
    Outcome(SessionOutcome),
}

impl Message {
    fn type_byte(&self) -> u8 {
        match self {
            Message::Instruction(_) => 1,
            Message::Helper(_) => 2,
            Message::Outcome(_) => 3,
        }
    }

    pub fn to_frame(&self) -> Vec<u8> {
        let payload = match self {
            Message::Instruction(i) => i.to_bytes(),
            Message::Helper(h) => h.to_bytes(),
            Message::Outcome(o) => vec![*o as u8],
        };
        let mut out = Vec::with_capacity(9 + payload.len());
        out.extend_from_slice(FRAME_MAGIC);
        out.push(self.type_byte());
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&payload);
        out
    }

    /// Parses one frame from the front of `buf`, returning the message and
    /// the bytes consumed.
    pub fn from_frame(buf: &[u8]) -> Result<(Message, usize)> {
        if buf.len() < 9 || &buf[..4] != FRAME_MAGIC {
            return Err(PufError::format("frame", "bad magic or truncated header"));
        }
        let len = u32::from_le_bytes(buf[5..9].try_into().unwrap()) as usize;
        let payload = buf
            .get(9..9 + len)
            .ok_or_else(|| PufError::format("frame", "truncated payload"))?;
        let msg = match buf[4] {
            1 => Message::Instruction(Instruction::from_bytes(payload)?),
            2 => Message::Helper(HelperData::from_bytes(payload)?),
            3 => Message::Outcome(match payload {
                [0] => SessionOutcome::Match,
                [1] => SessionOutcome::Reject,
                [2] => SessionOutcome::Mismatch,
                _ => return Err(PufError::format("frame", "bad outcome payload")),
            }),
            other => return Err(PufError::format("frame", format!("unknown message type {other}"))),
        };
        Ok((msg, 9 + len))
    }
}

/// Server-side record for one address.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub device: DeviceId,
    pub instruction: Instruction,
    /// Enrolled values at the selected cells (`X_i`).
    pub response: BitVector,
    /// Helper issued at enrollment, kept so the record can be persisted.
    pub helper: HelperData,
    pub enrollment: EnrollmentConfig,
}

/// Enrolled challenges keyed by address.
#[derive(Debug, Default)]
pub struct ChallengeDatabase {
    entries: RwLock<BTreeMap<u64, Entry>>,
}

impl ChallengeDatabase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn addresses(&self) -> Vec<u64> {
        self.entries.read().unwrap().keys().copied().collect()
    }

    pub fn entry(&self, address: u64) -> Result<Entry> {
        self.entries
            .read()
            .unwrap()
            .get(&address)
            .cloned()
            .ok_or(PufError::UnknownAddress(address))
    }

    /// Builds a ternary challenge from `reads` and enrolls it.
    #[allow(clippy::too_many_arguments)]
    pub fn server_enroll(
        &self,
        reads: &[BitVector],
        device: DeviceId,
        user_id: &[u8],
        nonce: &[u8],
        config: &ProtocolConfig,
        seed: u64,
    ) -> Result<u64> {
        let challenge = enroll(reads, &config.enrollment, device)?;
        self.enroll_challenge(&challenge, user_id, nonce, config, seed)
    }

    /// Selects cells of an existing challenge for `(user_id, nonce)` and
    /// stores `X_i` under the derived address, replacing any previous entry.
    pub fn enroll_challenge(
        &self,
        challenge: &TernaryChallenge,
        user_id: &[u8],
        nonce: &[u8],
        config: &ProtocolConfig,
        seed: u64,
    ) -> Result<u64> {
        let request = AddressRequest::new(user_id, nonce, config.cell_budget())?;
        let selection = apg::select_for_request(&request, challenge)?;
        let address = selection.derived_address;
        let response = apg::extract_response(&selection, &challenge.values.values())?;
        let (_, helper) = fuzzy::generate(&response, config.scheme, &config.code, config.key_bits, seed)?;
        let instruction = Instruction {
            address,
            selection: CellSelection {
                request: None,
                ..selection
            },
            scheme: config.scheme,
            code: config.code.clone(),
            key_bits: config.key_bits,
        };
        let entry = Entry {
            device: challenge.source_device,
            instruction,
            response,
            helper,
            enrollment: challenge.config,
        };
        self.entries.write().unwrap().insert(address, entry);
        Ok(address)
    }

    /// Runs the extractor on the stored `X_i` with a fresh `seed`.
    pub fn server_issue(&self, address: u64, seed: u64) -> Result<(Instruction, HelperData, SecretKey)> {
        let guard = self.entries.read().unwrap();
        let entry = guard.get(&address).ok_or(PufError::UnknownAddress(address))?;
        let ins = &entry.instruction;
        let (key, helper) = fuzzy::generate(&entry.response, ins.scheme, &ins.code, ins.key_bits, seed)?;
        Ok((ins.clone(), helper, key))
    }

    /// Issue, respond, and compare. Messages pass through their framed
    /// encoding.
    pub fn session(&self, address: u64, device: &dyn ResponseSource, seed: u64) -> Result<SessionOutcome> {
        let (instruction, helper, server_key) = self.server_issue(address, seed)?;
        let wire = [Message::Instruction(instruction), Message::Helper(helper)]
            .iter()
            .flat_map(Message::to_frame)
            .collect::<Vec<u8>>();
        let (first, used) = Message::from_frame(&wire)?;
        let (second, _) = Message::from_frame(&wire[used..])?;
        let (Message::Instruction(instruction), Message::Helper(helper)) = (first, second) else {
            return Err(PufError::format("frame", "unexpected message order"));
        };
        let read_seed = rng::derive_seed(seed, labels::READ, address);
        Ok(match client_respond(device, &instruction, &helper, read_seed)? {
            None => SessionOutcome::Reject,
            Some(k) if k == server_key => SessionOutcome::Match,
            Some(_) => SessionOutcome::Mismatch,
        })
    }

    /// Writes `<address>.pufc` (enrolled `X_i` and the device id),
    /// `<address>.pufi` (framed instruction), and `<address>.pufh` per
    /// entry. Addresses are 16 hex digits.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (address, e) in self.entries.read().unwrap().iter() {
            let stem = dir.join(format!("{address:016x}"));
            TernaryChallenge {
                values: TernaryVector::from_bitvector(&e.response),
                reads_used: e.enrollment.reads,
                source_device: e.device,
                config: e.enrollment,
            }
            .save_path(stem.with_extension("pufc"))?;
            std::fs::write(
                stem.with_extension("pufi"),
                Message::Instruction(e.instruction.clone()).to_frame(),
            )?;
            e.helper.save_path(stem.with_extension("pufh"))?;
        }
        Ok(())
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let db = ChallengeDatabase::new();
        let mut entries = BTreeMap::new();
        for item in std::fs::read_dir(dir)? {
            let path = item?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("pufi") {
                continue;
            }
            let instruction = match Message::from_frame(&std::fs::read(&path)?)? {
                (Message::Instruction(i), _) => i,
                _ => return Err(PufError::format("instruction file", "not an instruction frame")),
            };
            let challenge = TernaryChallenge::load_path(path.with_extension("pufc"))?;
            let helper = HelperData::load_path(path.with_extension("pufh"))?;
            if challenge.stable_count() != challenge.len() || challenge.len() != instruction.selection.len() {
                return Err(PufError::format("challenge file", "stored X_i must be fully stable and match the instruction"));
            }
            entries.insert(
                instruction.address,
                Entry {
                    device: challenge.source_device,
                    response: challenge.values.values(),
                    enrollment: challenge.config,
                    instruction,
                    helper,
                },
            );
        }
        *db.entries.write().unwrap() = entries;
        Ok(db)
    }
}

/// Reads the instructed cells and reproduces the key; `None` is REJECT.
pub fn client_respond(
    device: &dyn ResponseSource,
    instruction: &Instruction,
    helper: &HelperData,
    read_seed: u64,
) -> Result<Option<SecretKey>> {
    let response = device.read_cells(read_seed, &instruction.selection.indices)?;
    fuzzy::reproduce(&response, helper)
}
