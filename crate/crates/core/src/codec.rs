//! Systematic random linear network coding over GF(2^8).
//!
//! A generation is `k` equal-length source symbols. Each source symbol is
//! first sent as-is (systematic); repair symbols are random linear
//! combinations of the whole generation and carry their coefficient vector
//! verbatim. The receiver keeps the received rows in reduced row-echelon
//! form, so rank and the number of missing degrees of freedom are known after
//! every insertion and full rank means the payload rows already are the
//! source symbols.

use rand::Rng;
use thiserror::Error;

use crate::gf::{axpy_in_place, scale_in_place, FieldElement};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("generation is empty")]
    EmptyGeneration,
    #[error("source packet {index} belongs to generation {found}, expected {expected}")]
    MixedGeneration {
        index: usize,
        expected: u64,
        found: u64,
    },
    #[error("source packet index {index} does not match its position {position}")]
    IndexMismatch { index: usize, position: usize },
    #[error("symbol size mismatch: expected {expected} bytes, got {found}")]
    SymbolSize { expected: usize, found: usize },
    #[error("packet for generation {found} given to decoder of generation {expected}")]
    GenerationMismatch { expected: u64, found: u64 },
    #[error("coefficient vector has length {found}, generation size is {expected}")]
    CoefficientLength { expected: usize, found: usize },
    #[error("systematic index {index} out of range for generation size {k}")]
    IndexOutOfRange { index: usize, k: usize },
    #[error("generation not yet decodable: {dofs_needed} degrees of freedom missing")]
    NotDecodable { dofs_needed: usize },
}

/// One uncoded source symbol of a generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourcePacket {
    pub generation_id: u64,
    pub index_in_generation: usize,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PacketKind {
    Systematic { index: usize },
    Coded { coefficients: Vec<FieldElement> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedPacket {
    pub generation_id: u64,
    pub kind: PacketKind,
    pub payload: Vec<u8>,
}

impl CodedPacket {
    pub fn systematic(src: &SourcePacket) -> Self {
        Self {
            generation_id: src.generation_id,
            kind: PacketKind::Systematic {
                index: src.index_in_generation,
            },
            payload: src.payload.clone(),
        }
    }

    pub fn is_coded(&self) -> bool {
        matches!(self.kind, PacketKind::Coded { .. })
    }

    /// The coefficient row this packet contributes, materializing the unit
    /// vector for systematic packets.
    pub fn coefficient_row(&self, k: usize) -> Result<Vec<u8>, CodecError> {
        match &self.kind {
            PacketKind::Systematic { index } => {
                if *index >= k {
                    return Err(CodecError::IndexOutOfRange { index: *index, k });
                }
                let mut row = vec![0u8; k];
                row[*index] = 1;
                Ok(row)
            }
            PacketKind::Coded { coefficients } => {
                if coefficients.len() != k {
                    return Err(CodecError::CoefficientLength {
                        expected: k,
                        found: coefficients.len(),
                    });
                }
                Ok(coefficients.iter().map(|c| c.value()).collect())
            }
        }
    }
}

fn check_generation(generation: &[SourcePacket]) -> Result<(), CodecError> {
    let first = generation.first().ok_or(CodecError::EmptyGeneration)?;
    let symbol = first.payload.len();
    for (position, p) in generation.iter().enumerate() {
        if p.generation_id != first.generation_id {
            return Err(CodecError::MixedGeneration {
                index: position,
                expected: first.generation_id,
                found: p.generation_id,
            });
        }
        if p.index_in_generation != position {
            return Err(CodecError::IndexMismatch {
                index: p.index_in_generation,
                position,
            });
        }
        if p.payload.len() != symbol {
            return Err(CodecError::SymbolSize {
                expected: symbol,
                found: p.payload.len(),
            });
        }
    }
    Ok(())
}

/// Combines the generation with the given coefficients.
pub fn encode_with_coefficients(
    generation: &[SourcePacket],
    coefficients: Vec<FieldElement>,
) -> Result<CodedPacket, CodecError> {
    check_generation(generation)?;
    if coefficients.len() != generation.len() {
        return Err(CodecError::CoefficientLength {
            expected: generation.len(),
            found: coefficients.len(),
        });
    }
    let mut payload = vec![0u8; generation[0].payload.len()];
    for (c, src) in coefficients.iter().zip(generation) {
        axpy_in_place(*c, &src.payload, &mut payload);
    }
    Ok(CodedPacket {
        generation_id: generation[0].generation_id,
        kind: PacketKind::Coded { coefficients },
        payload,
    })
}

/// Draws `k` uniform coefficients, redrawing the all-zero vector.
pub fn draw_coefficients<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<FieldElement> {
    let mut coefficients = vec![FieldElement::ZERO; k];
    loop {
        for c in coefficients.iter_mut() {
            *c = FieldElement(rng.gen());
        }
        if coefficients.iter().any(|c| !c.is_zero()) {
            return coefficients;
        }
    }
}

/// Produces one random coded packet from a full generation.
pub fn encode_coded<R: Rng + ?Sized>(
    generation: &[SourcePacket],
    rng: &mut R,
) -> Result<CodedPacket, CodecError> {
    check_generation(generation)?;
    let coefficients = draw_coefficients(generation.len(), rng);
    encode_with_coefficients(generation, coefficients)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Innovation {
    Innovative,
    Redundant,
}

#[derive(Debug, Clone)]
struct Row {
    coefficients: Vec<u8>,
    payload: Vec<u8>,
}

/// Incremental Gauss-Jordan decoder for one generation.
#[derive(Debug, Clone)]
pub struct DecoderState {
    generation_id: u64,
    k: usize,
    symbol_size: usize,
    // rows[c] holds the row whose pivot is column c.
    rows: Vec<Option<Row>>,
    rank: usize,
}

impl DecoderState {
    pub fn new(generation_id: u64, k: usize, symbol_size: usize) -> Self {
        assert!(k > 0, "generation size must be positive");
        Self {
            generation_id,
            k,
            symbol_size,
            rows: vec![None; k],
            rank: 0,
        }
    }

    pub fn generation_id(&self) -> u64 {
        self.generation_id
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dofs_needed(&self) -> usize {
        self.k - self.rank
    }

    pub fn is_complete(&self) -> bool {
        self.rank == self.k
    }

    /// Coefficient rows currently held, ordered by pivot column.
    pub fn coefficient_rows(&self) -> Vec<Vec<u8>> {
        self.rows
            .iter()
            .flatten()
            .map(|r| r.coefficients.clone())
            .collect()
    }

    pub fn add(&mut self, pkt: &CodedPacket) -> Result<Innovation, CodecError> {
        if pkt.generation_id != self.generation_id {
            return Err(CodecError::GenerationMismatch {
                expected: self.generation_id,
                found: pkt.generation_id,
            });
        }
        if pkt.payload.len() != self.symbol_size {
            return Err(CodecError::SymbolSize {
                expected: self.symbol_size,
                found: pkt.payload.len(),
            });
        }
        let mut coefficients = pkt.coefficient_row(self.k)?;
        if self.rank == self.k {
            return Ok(Innovation::Redundant);
        }

        // Cheap check on the coefficients first; the payload only follows
        // when the row turns out to be innovative.
        let mut ops: Vec<(usize, u8)> = Vec::new();
        for col in 0..self.k {
            let f = coefficients[col];
            if f == 0 {
                continue;
            }
            if let Some(row) = &self.rows[col] {
                axpy_in_place(FieldElement(f), &row.coefficients, &mut coefficients);
                ops.push((col, f));
            }
        }
        let Some(pivot) = coefficients.iter().position(|&c| c != 0) else {
            return Ok(Innovation::Redundant);
        };

        let mut payload = pkt.payload.clone();
        for (col, f) in ops {
            let row = self.rows[col].as_ref().expect("pivot row present");
            axpy_in_place(FieldElement(f), &row.payload, &mut payload);
        }
        let inv = FieldElement(coefficients[pivot])
            .inv()
            .expect("pivot is nonzero");
        scale_in_place(inv, &mut coefficients);
        scale_in_place(inv, &mut payload);

        for row in self.rows.iter_mut().flatten() {
            let f = row.coefficients[pivot];
            if f != 0 {
                axpy_in_place(FieldElement(f), &coefficients, &mut row.coefficients);
                axpy_in_place(FieldElement(f), &payload, &mut row.payload);
            }
        }
        self.rows[pivot] = Some(Row {
            coefficients,
            payload,
        });
        self.rank += 1;
        Ok(Innovation::Innovative)
    }

    /// Returns the `k` source payloads in index order.
    pub fn extract(&self) -> Result<Vec<Vec<u8>>, CodecError> {
        if !self.is_complete() {
            return Err(CodecError::NotDecodable {
                dofs_needed: self.dofs_needed(),
            });
        }
        Ok(self
            .rows
            .iter()
            .map(|r| r.as_ref().expect("full rank").payload.clone())
            .collect())
    }
}
