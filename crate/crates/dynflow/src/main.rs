fn main() {
    // CLI wiring lands with the harness module.
    eprintln!("dynflow: harness not built yet");
    std::process::exit(2);
}
