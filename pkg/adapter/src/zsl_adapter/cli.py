import argparse
import sys

from .backend import BackendConfig, load_backend
from .server import DEFAULT_PORT, AdapterServer


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="zsl-adapter")
    sub = ap.add_subparsers(dest="command", required=True)
    srv = sub.add_parser("serve", help="run the segmentation server")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=DEFAULT_PORT)
    srv.add_argument("--detector", default="yolov8s-worldv2.pt")
    srv.add_argument("--segmenter", default="sam2_b.pt")
    srv.add_argument("--device", default="cpu")
    srv.add_argument("--box-threshold", type=float, default=0.25)
    srv.add_argument("--text-threshold", type=float, default=0.25)
    srv.add_argument("--stub", action="store_true", help="skip model loading, serve stub responses")
    srv.add_argument("--announce-port", action="store_true",
                     help="print the bound endpoint on stdout before serving")
    args = ap.parse_args(argv)

    cfg = BackendConfig(
        detector=args.detector,
        segmenter=args.segmenter,
        device=args.device,
        box_threshold=args.box_threshold,
        text_threshold=args.text_threshold,
    )
    backend = load_backend(cfg, force_stub=args.stub)
    server = AdapterServer(args.host, args.port, backend)
    host, port = server.endpoint
    if args.announce_port:
        print(f"zsl-adapter listening on {host}:{port}", flush=True)
    else:
        print(f"zsl-adapter ({backend.name}) listening on {host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
