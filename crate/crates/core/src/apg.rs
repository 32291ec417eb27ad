//! Addressable PUF generator: a user id and a nonce pick an address, and
//! the address seeds a pseudo-random walk over the stable cells of an
//! enrolled challenge.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bits::BitVector;
use crate::enrollment::TernaryChallenge;
use crate::error::{PufError, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressRequest {
    pub user_id: Vec<u8>,
    pub nonce: Vec<u8>,
    pub cell_budget: usize,
}

impl AddressRequest {
    pub fn new(user_id: impl Into<Vec<u8>>, nonce: impl Into<Vec<u8>>, cell_budget: usize) -> Result<Self> {
        let req = AddressRequest {
            user_id: user_id.into(),
            nonce: nonce.into(),
            cell_budget,
        };
        if req.user_id.is_empty() {
            return Err(PufError::InvalidParameter("user id must be non-empty".into()));
        }
        if cell_budget == 0 {
            return Err(PufError::InvalidParameter("cell budget must be at least 1".into()));
        }
        Ok(req)
    }
}

/// Cells picked for one address, in draw order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSelection {
    pub indices: Vec<usize>,
    pub derived_address: u64,
    pub request: Option<AddressRequest>,
}

impl CellSelection {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// XOR of the two inputs, the shorter one padded with zero bytes.
pub fn pad_xor(a: &[u8], b: &[u8]) -> Vec<u8> {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut out = long.to_vec();
    for (o, s) in out.iter_mut().zip(short) {
        *o ^= s;
    }
    out
}

/// SHA-256 of `pad_xor(user_id, nonce)`; the first eight digest bytes, read
/// little-endian, reduced modulo `cell_count`.
pub fn derive_address(user_id: &[u8], nonce: &[u8], cell_count: usize) -> Result<u64> {
    if user_id.is_empty() {
        return Err(PufError::InvalidParameter("user id must be non-empty".into()));
    }
    if cell_count == 0 {
        return Err(PufError::InvalidParameter("cell count must be positive".into()));
    }
    let digest = Sha256::digest(pad_xor(user_id, nonce));
    let head = u64::from_le_bytes(digest[..8].try_into().unwrap());
    Ok(head % cell_count as u64)
}

/// Seeds the PRNG with `address` and draws indices over the whole challenge,
/// skipping X cells and repeats until `budget` cells are chosen.
pub fn select_cells(address: u64, challenge: &TernaryChallenge, budget: usize) -> Result<CellSelection> {
    let stable = challenge.stable_count();
    if budget > stable {
        return Err(PufError::InsufficientStableCells { stable, budget });
    }
    let cells = challenge.values.cells();
    let mut chosen = vec![false; cells.len()];
    let mut indices = Vec::with_capacity(budget);
    let mut rng = rng::prng(address);
    while indices.len() < budget {
        let i = rng::bounded(&mut rng, cells.len() as u64) as usize;
        if cells[i].is_stable() && !chosen[i] {
            chosen[i] = true;
            indices.push(i);
        }
    }
    Ok(CellSelection {
        indices,
        derived_address: address,
        request: None,
    })
}

/// Derives the address for `request` and selects its cells.
pub fn select_for_request(request: &AddressRequest, challenge: &TernaryChallenge) -> Result<CellSelection> {
    let address = derive_address(&request.user_id, &request.nonce, challenge.len())?;
    let mut sel = select_cells(address, challenge, request.cell_budget)?;
    sel.request = Some(request.clone());
    Ok(sel)
}

/// `result[j] = read[selection.indices[j]]`.
pub fn extract_response(selection: &CellSelection, read: &BitVector) -> Result<BitVector> {
    read.gather(&selection.indices)
}
