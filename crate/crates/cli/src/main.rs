fn main() {
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    let code = memnet_cli::execute(std::env::args_os(), &mut out, &mut err);
    let _ = std::io::Write::flush(&mut out);
    drop(out);
    drop(err);
    std::process::exit(code);
}
