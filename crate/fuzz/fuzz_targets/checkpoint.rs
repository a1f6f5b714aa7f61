#![no_main]

use gdsr_core::model::GdsrModel;
use gdsr_nnet::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::decode(data) {
        let bytes = ckpt.encode();
        assert_eq!(Checkpoint::decode(&bytes).unwrap().encode(), bytes);
        let _ = GdsrModel::from_checkpoint(&ckpt);
    }
});
