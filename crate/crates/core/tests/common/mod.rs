#![allow(dead_code)]

use nftdisk_core::synth::{random_log, synthetic_address, RandomLogSpec};
use nftdisk_core::{build_dataset, Address, CollectionDataset, TokenId, TransactionRecord, Wei};

pub const T0: u64 = 1_650_000_000;

pub fn addr(n: u32) -> Address {
    synthetic_address(0xaa, n)
}

pub fn rec(t: u64, token: u128, ether: &str, from: Address, to: Address) -> TransactionRecord {
    TransactionRecord::new(t, TokenId(token), Wei::from_ether_str(ether).unwrap(), from, to)
}

pub fn mint(t: u64, token: u128, to: Address) -> TransactionRecord {
    rec(t, token, "0", Address::ZERO, to)
}

pub fn log_spec(transactions: usize, addresses: usize, tokens: usize) -> RandomLogSpec {
    RandomLogSpec { transactions, addresses, tokens, start: T0, max_gap: 3_600, transfer_percent: 20 }
}

pub fn random_dataset(seed: u64, spec: &RandomLogSpec) -> CollectionDataset {
    build_dataset(random_log(seed, spec), "random").unwrap()
}
