//! Versioned binary formats for ciphertexts ("TIPC") and key material ("TIPK").

use std::collections::BTreeMap;

use super::ciphertext::Ciphertext;
use super::context::{CkksContext, RnsPoly};
use super::keys::{EvalKeys, KeySet, KeySwitchKey, PublicKey, SecretKey};
use super::CkksError;
use crate::codec::{Reader, Truncated, Writer};

pub const CIPHERTEXT_MAGIC: &[u8; 4] = b"TIPC";
pub const KEY_MAGIC: &[u8; 4] = b"TIPK";
pub const FORMAT_VERSION: u16 = 1;

/// What a "TIPK" file holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeyKind {
    Public = 1,
    Secret = 2,
    Eval = 3,
    Full = 4,
}

impl From<Truncated> for CkksError {
    fn from(e: Truncated) -> Self {
        CkksError::MalformedFrame(e.0)
    }
}

fn write_header(w: &mut Writer, magic: &[u8; 4], ctx: &CkksContext) {
    w.bytes(magic).u16(FORMAT_VERSION).bytes(ctx.params_hash());
}

fn read_header(r: &mut Reader<'_>, magic: &[u8; 4], ctx: &CkksContext) -> Result<(), CkksError> {
    if r.take(4)? != magic {
        return Err(CkksError::MalformedFrame(format!(
            "bad magic, expected {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(CkksError::VersionMismatch {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    if r.take(32)? != ctx.params_hash() {
        return Err(CkksError::ParamsMismatch);
    }
    Ok(())
}

/// Coefficient count, then one residue array per row. `moduli` gives the
/// modulus of each row for range checking on read.
fn write_poly(w: &mut Writer, p: &RnsPoly, n: usize) {
    w.u32(n as u32);
    for row in &p.rows {
        w.u64s(row);
    }
}

fn read_poly(r: &mut Reader<'_>, ctx: &CkksContext, rows: &[usize]) -> Result<RnsPoly, CkksError> {
    let n = r.u32()? as usize;
    if n != ctx.n() {
        return Err(CkksError::MalformedFrame(format!(
            "coefficient count {n}, expected {}",
            ctx.n()
        )));
    }
    let mut out = Vec::with_capacity(rows.len());
    for &row in rows {
        let q = ctx.key_modulus(row).value();
        let residues = r.u64s(n)?;
        if residues.iter().any(|&x| x >= q) {
            return Err(CkksError::MalformedFrame(format!(
                "residue out of range for prime {row}"
            )));
        }
        out.push(residues);
    }
    Ok(RnsPoly { rows: out })
}

impl CkksContext {
    pub fn serialize_ciphertext(&self, ct: &Ciphertext) -> Vec<u8> {
        let mut w = Writer::new();
        write_header(&mut w, CIPHERTEXT_MAGIC, self);
        w.u8(ct.level as u8)
            .u8(ct.parts.len() as u8)
            .f64(ct.log_scale)
            .u32(ct.slots as u32);
        for part in &ct.parts {
            write_poly(&mut w, part, self.n());
        }
        w.finish()
    }

    pub fn deserialize_ciphertext(&self, bytes: &[u8]) -> Result<Ciphertext, CkksError> {
        let mut r = Reader::new(bytes);
        read_header(&mut r, CIPHERTEXT_MAGIC, self)?;
        let level = r.u8()? as usize;
        if level > self.max_level() {
            return Err(CkksError::MalformedFrame(format!("level {level} beyond chain")));
        }
        let parts = r.u8()? as usize;
        if !(2..=3).contains(&parts) {
            return Err(CkksError::MalformedFrame(format!("{parts} ciphertext parts")));
        }
        let log_scale = r.f64()?;
        if !log_scale.is_finite() || log_scale <= 0.0 {
            return Err(CkksError::MalformedFrame("invalid scale".into()));
        }
        let slots = r.u32()? as usize;
        if slots > self.slot_count() {
            return Err(CkksError::MalformedFrame(format!("{slots} slots used")));
        }
        let rows: Vec<usize> = (0..=level).collect();
        let parts = (0..parts)
            .map(|_| read_poly(&mut r, self, &rows))
            .collect::<Result<Vec<_>, _>>()?;
        r.finish()?;
        Ok(Ciphertext {
            parts,
            log_scale,
            level,
            slots,
            noise: None,
        })
    }

    fn write_public(&self, w: &mut Writer, pk: &PublicKey) {
        write_poly(w, &pk.b, self.n());
        write_poly(w, &pk.a, self.n());
    }

    fn read_public(&self, r: &mut Reader<'_>) -> Result<PublicKey, CkksError> {
        let rows: Vec<usize> = (0..=self.max_level()).collect();
        Ok(PublicKey {
            b: read_poly(r, self, &rows)?,
            a: read_poly(r, self, &rows)?,
        })
    }

    fn write_secret(&self, w: &mut Writer, sk: &SecretKey) {
        w.u32(sk.coeffs.len() as u32);
        for &c in &sk.coeffs {
            w.u8(c as i8 as u8);
        }
    }

    fn read_secret(&self, r: &mut Reader<'_>) -> Result<SecretKey, CkksError> {
        let n = r.u32()? as usize;
        if n != self.n() {
            return Err(CkksError::MalformedFrame(format!("secret key of length {n}")));
        }
        let coeffs = r
            .take(n)?
            .iter()
            .map(|&b| match b as i8 {
                c @ -1..=1 => Ok(c as i64),
                c => Err(CkksError::MalformedFrame(format!("secret coefficient {c}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SecretKey { coeffs })
    }

    fn write_switch_key(&self, w: &mut Writer, key: &KeySwitchKey) {
        w.u32(key.digits.len() as u32);
        for (b, a) in &key.digits {
            write_poly(w, b, self.n());
            write_poly(w, a, self.n());
        }
    }

    fn read_switch_key(&self, r: &mut Reader<'_>) -> Result<KeySwitchKey, CkksError> {
        let count = r.u32()? as usize;
        if count != self.total_digits() {
            return Err(CkksError::MalformedFrame(format!("{count} key-switching digits")));
        }
        let rows: Vec<usize> = (0..self.key_rows()).collect();
        let digits = (0..count)
            .map(|_| Ok((read_poly(r, self, &rows)?, read_poly(r, self, &rows)?)))
            .collect::<Result<Vec<_>, CkksError>>()?;
        Ok(KeySwitchKey { digits })
    }

    fn write_eval(&self, w: &mut Writer, ek: &EvalKeys) {
        self.write_switch_key(w, &ek.relin);
        w.u32(ek.galois.len() as u32);
        for (&step, key) in &ek.galois {
            w.u32(step as u32);
            self.write_switch_key(w, key);
        }
    }

    fn read_eval(&self, r: &mut Reader<'_>) -> Result<EvalKeys, CkksError> {
        let relin = self.read_switch_key(r)?;
        let count = r.u32()? as usize;
        let mut galois = BTreeMap::new();
        for _ in 0..count {
            let step = r.u32()? as usize;
            if step == 0 || step >= self.slot_count() {
                return Err(CkksError::MalformedFrame(format!("rotation step {step}")));
            }
            galois.insert(step, self.read_switch_key(r)?);
        }
        Ok(EvalKeys { relin, galois })
    }

    fn key_frame(&self, kind: KeyKind, body: impl FnOnce(&mut Writer)) -> Vec<u8> {
        let mut w = Writer::new();
        write_header(&mut w, KEY_MAGIC, self);
        w.u8(kind as u8);
        body(&mut w);
        w.finish()
    }

    fn open_key_frame<'a>(&self, bytes: &'a [u8], kind: KeyKind) -> Result<Reader<'a>, CkksError> {
        let mut r = Reader::new(bytes);
        read_header(&mut r, KEY_MAGIC, self)?;
        let found = r.u8()?;
        if found != kind as u8 {
            return Err(CkksError::MalformedFrame(format!(
                "key file kind {found}, expected {}",
                kind as u8
            )));
        }
        Ok(r)
    }

    pub fn serialize_public_key(&self, pk: &PublicKey) -> Vec<u8> {
        self.key_frame(KeyKind::Public, |w| self.write_public(w, pk))
    }

    pub fn deserialize_public_key(&self, bytes: &[u8]) -> Result<PublicKey, CkksError> {
        let mut r = self.open_key_frame(bytes, KeyKind::Public)?;
        let pk = self.read_public(&mut r)?;
        r.finish()?;
        Ok(pk)
    }

    pub fn serialize_secret_key(&self, sk: &SecretKey) -> Vec<u8> {
        self.key_frame(KeyKind::Secret, |w| self.write_secret(w, sk))
    }

    pub fn deserialize_secret_key(&self, bytes: &[u8]) -> Result<SecretKey, CkksError> {
        let mut r = self.open_key_frame(bytes, KeyKind::Secret)?;
        let sk = self.read_secret(&mut r)?;
        r.finish()?;
        Ok(sk)
    }

    pub fn serialize_eval_keys(&self, ek: &EvalKeys) -> Vec<u8> {
        self.key_frame(KeyKind::Eval, |w| self.write_eval(w, ek))
    }

    pub fn deserialize_eval_keys(&self, bytes: &[u8]) -> Result<EvalKeys, CkksError> {
        let mut r = self.open_key_frame(bytes, KeyKind::Eval)?;
        let ek = self.read_eval(&mut r)?;
        r.finish()?;
        Ok(ek)
    }

    pub fn serialize_key_set(&self, keys: &KeySet) -> Vec<u8> {
        self.key_frame(KeyKind::Full, |w| {
            self.write_public(w, &keys.public_key);
            self.write_secret(w, &keys.secret_key);
            self.write_eval(w, &keys.eval_keys);
        })
    }

    pub fn deserialize_key_set(&self, bytes: &[u8]) -> Result<KeySet, CkksError> {
        let mut r = self.open_key_frame(bytes, KeyKind::Full)?;
        let public_key = self.read_public(&mut r)?;
        let secret_key = self.read_secret(&mut r)?;
        let eval_keys = self.read_eval(&mut r)?;
        r.finish()?;
        Ok(KeySet {
            public_key,
            secret_key,
            eval_keys,
        })
    }
}
