import argparse
import re
import sys
from enum import Enum, IntEnum, StrEnum
from pathlib import Path
from typing import Optional, Self

from loguru import logger as log
from pydantic import BaseModel, ValidationError, model_validator

from app.commitment import (
    commit,
    decode_commit_params,
    decode_commitment,
    decode_opening,
    decode_trapdoor,
    encode_commit_params,
    encode_commitment,
    encode_opening,
    encode_trapdoor,
    equivocate,
    extract,
    hiding_distribution,
    setup_honest,
    setup_trapdoor,
    verify,
)
from app.config import settings
from app.errors import CommitmentError, EncodingError, EquivocalError, ErrorCode
from app.group import (
    decode_params,
    encode_params,
    encode_scalar,
    fixed_test_params,
    generate_params,
    to_scalar,
)
from app.models import CommitParams, GroupParams, Opening, Scalar, Trapdoor
from app.protocol.protocol_codec import encode_transcript
from app.protocol.protocol_schemas import ReceiverMode, Transcript
from app.protocol.transport import TransportKind, demo_protocol
from app.simulator.simulator_runs import (
    BUILTIN_FUNCTIONS,
    format_report,
    parse_schedule,
    run,
    sequential_schedule,
)
from app.simulator.simulator_schemas import (
    AdversarialStrategy,
    EquivocatorStrategy,
    HonestStrategy,
    Schedule,
)
from app.utils import derive_seed, is_probable_prime, make_rng


class ExitCode(IntEnum):
    OK = 0
    FAILED = 1
    USAGE = 2
    MALFORMED = 3


class GroupSource(StrEnum, Enum):
    GENERATE = 'generate'
    TOY = 'toy'
    FILE = 'file'


class OutputFormat(StrEnum, Enum):
    TEXT = 'text'
    HEX = 'hex'


class UsageError(Exception):
    pass


# subcommands that draw randomness and therefore need --seed
RANDOMIZED = {"commit", "demo-protocol", "simulate"}
NEEDS_GROUP = {"gen-params", "setup", "demo-protocol", "simulate"}

OPENING_LITERAL = re.compile(r"^\s*(\d+)\s*,\s*(\d+)\s*$")


class CliConfig(BaseModel):
    """Validated view of the parsed command line."""
    command: str
    group_source: Optional[GroupSource] = None
    q_bits: Optional[int] = None
    group_file: Optional[Path] = None
    seed: Optional[str] = None
    output_format: OutputFormat = OutputFormat.TEXT
    trapdoor: bool = False

    @model_validator(mode="after")
    def check_sources(self) -> Self:
        if self.command in NEEDS_GROUP and self.group_source is None:
            raise ValueError(f"{self.command} needs one of --toy, --q-bits or --group-file")
        randomized = (
            self.command in RANDOMIZED
            or self.group_source == GroupSource.GENERATE
            or (self.command == "setup" and self.trapdoor)
        )
        if randomized and not self.seed:
            raise ValueError(f"{self.command} is randomized and needs --seed")
        return self

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "CliConfig":
        sources = [
            (GroupSource.GENERATE, args.q_bits is not None),
            (GroupSource.TOY, args.toy),
            (GroupSource.FILE, args.group_file is not None),
        ]
        chosen = [source for source, given in sources if given]
        if len(chosen) > 1:
            raise UsageError("give exactly one of --toy, --q-bits or --group-file")
        return cls(
            command=args.command,
            group_source=chosen[0] if chosen else None,
            q_bits=args.q_bits,
            group_file=args.group_file,
            seed=args.seed,
            output_format=args.format,
            trapdoor=getattr(args, "trapdoor", False),
        )


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None


class App:
    def __init__(self):
        self.args: argparse.Namespace
        self.config: CliConfig

    # --- helpers ---

    def emit(self, text: str, hex_value: bytes | str | None = None):
        """Write one result line to stdout in the selected format."""
        if self.config.output_format == OutputFormat.HEX and hex_value is not None:
            print(hex_value.hex() if isinstance(hex_value, bytes) else hex_value)
        else:
            print(text)

    def load_group(self) -> GroupParams:
        match self.config.group_source:
            case GroupSource.TOY:
                return fixed_test_params()
            case GroupSource.GENERATE:
                return generate_params(self.config.q_bits, self.config.seed)  # type: ignore[arg-type]
            case GroupSource.FILE:
                return decode_params(Path(self.config.group_file).read_bytes())  # type: ignore[arg-type]
        raise UsageError("no group source given")

    def load_params(self) -> CommitParams:
        return decode_commit_params(Path(self.args.params).read_bytes())

    def load_opening(self, source: str, group: Optional[GroupParams], q: Optional[int] = None) -> Opening:
        """An opening file, or an inline "x,r" pair."""
        q = group.q if group is not None else q
        m = OPENING_LITERAL.match(source)
        if m:
            x, r = (int(v) for v in m.groups())
            if x >= q or r >= q:  # type: ignore[operator]
                raise EncodingError(ErrorCode.OUT_OF_RANGE, f"opening {source} outside Z_{q}")
            return Opening(x=Scalar(q=q, value=x), r=Scalar(q=q, value=r))
        if group is None:
            raise UsageError("opening files need a group source, not --q")
        return decode_opening(Path(source).read_bytes(), group)

    def rng(self, label: str):
        return make_rng(derive_seed(self.config.seed, label))  # type: ignore[arg-type]

    @staticmethod
    def write_transcript(path: Path, transcript: Transcript) -> Path:
        if path.suffix != settings.TRANSCRIPT_SUFFIX:
            path = path.with_name(path.name + settings.TRANSCRIPT_SUFFIX)
        path.write_bytes(encode_transcript(transcript))
        log.info(f"Wrote transcript to {path}")
        return path

    @staticmethod
    def write_secret(path: Optional[Path], data: bytes, what: str):
        if path is None:
            raise UsageError(f"{what} is secret and needs an output file")
        path.write_bytes(data)
        log.info(f"Wrote {what} to {path}")

    # --- subcommands ---

    def gen_params(self) -> ExitCode:
        group = self.load_group()
        if self.args.out:
            self.args.out.write_bytes(encode_params(group))
        self.emit(f"p={group.p} q={group.q} g={group.g}", encode_params(group))
        return ExitCode.OK

    def setup(self) -> ExitCode:
        group = self.load_group()
        if self.args.trapdoor:
            params, td = setup_trapdoor(group, self.rng("setup"))
            self.write_secret(self.args.secret_out, encode_trapdoor(td), "trapdoor")
        else:
            params = setup_honest(group, self.args.public_seed)
        self.args.out.write_bytes(encode_commit_params(params))
        self.emit(f"B={params.B.value}", encode_commit_params(params))
        return ExitCode.OK

    def commit(self) -> ExitCode:
        params = self.load_params()
        x = to_scalar(params.group, self.args.value)
        Z, opening = commit(params, x, self.rng("commit"))
        self.write_secret(self.args.opening_out, encode_opening(opening), "opening")
        self.args.out.write_bytes(encode_commitment(Z))
        self.emit(f"Z={Z.Z.value}", encode_commitment(Z))
        return ExitCode.OK

    def verify(self) -> ExitCode:
        params = self.load_params()
        Z = decode_commitment(Path(self.args.commitment).read_bytes(), params.group)
        opening = self.load_opening(self.args.opening, params.group)
        ok = verify(params, Z, opening)
        self.emit("verified" if ok else "rejected", "01" if ok else "00")
        return ExitCode.OK if ok else ExitCode.FAILED

    def equivocate(self) -> ExitCode:
        params = self.load_params()
        td = decode_trapdoor(Path(self.args.trapdoor_file).read_bytes(), params.group)
        opening = self.load_opening(self.args.opening, params.group)
        revised = equivocate(td, opening, to_scalar(params.group, self.args.value))
        self.write_secret(self.args.opening_out, encode_opening(revised), "opening")
        self.emit(f"x={revised.x.value}", encode_scalar(revised.x))
        return ExitCode.OK

    def extract(self) -> ExitCode:
        if self.args.q is not None:
            if self.config.group_source is not None:
                raise UsageError("give either --q or a group source")
            q = self.args.q
            if not is_probable_prime(q):
                raise EncodingError(ErrorCode.INVALID_PARAMS, f"--q {q} is not prime")
            group = None
        else:
            group = self.load_group()
            q = group.q
        o1 = self.load_opening(self.args.opening1, group, q)
        o2 = self.load_opening(self.args.opening2, group, q)
        b = extract(o1, o2, q)
        if self.args.trapdoor_out:
            self.args.trapdoor_out.write_bytes(encode_trapdoor(Trapdoor(b=b)))
        self.emit(f"b={b.value}", encode_scalar(b))
        return ExitCode.OK

    def demo(self) -> ExitCode:
        group = self.load_group()
        report = demo_protocol(
            group,
            self.args.values,
            self.config.seed,  # type: ignore[arg-type]
            mode=ReceiverMode(self.args.mode.upper()),
            kind=TransportKind(self.args.transport),
        )
        if self.args.transcript_out:
            self.write_transcript(self.args.transcript_out, report.transcript)
        if self.config.output_format == OutputFormat.HEX:
            print(encode_transcript(report.transcript).hex())
        else:
            for sid, verdict in sorted(report.verdicts.items()):
                value = report.opened_values.get(sid, "-")
                print(f"session {sid} {verdict} value {value}")
        log.info(f"Demo finished in {report.elapsed_time}")
        return ExitCode.OK if report.all_accepted else ExitCode.FAILED

    def simulate(self) -> ExitCode:
        group = self.load_group()
        schedule = self.load_schedule()
        m = schedule.sessions
        match self.args.strategy:
            case "honest":
                values = self.args.values or [0] * m
                strategy = HonestStrategy(values=tuple(values))
            case "equivocator":
                initial = self.args.values or [0] * m
                strategy = EquivocatorStrategy(initial=tuple(initial), revised=tuple(self.args.revised or []))
            case _:
                strategy = AdversarialStrategy(f=BUILTIN_FUNCTIONS[self.args.f], name=self.args.f)
        mode = ReceiverMode(self.args.mode.upper())
        report = run(schedule, strategy, mode, self.config.seed, group)  # type: ignore[arg-type]

        text = format_report(report)
        if self.args.report_out:
            self.args.report_out.write_text(text)
        if self.args.transcript_out:
            self.write_transcript(self.args.transcript_out, report.transcript)
        if self.config.output_format == OutputFormat.HEX:
            print(encode_transcript(report.transcript).hex())
        else:
            sys.stdout.write(text)
        return ExitCode.OK if report.all_accepted else ExitCode.FAILED

    def load_schedule(self) -> Schedule:
        if self.args.schedule:
            return parse_schedule(Path(self.args.schedule).read_text(), self.args.sessions)
        return sequential_schedule(self.args.sessions or 1)

    def hiding_check(self) -> ExitCode:
        if self.args.params:
            params = self.load_params()
        else:
            params = setup_honest(self.load_group(), self.args.public_seed)
        group = params.group
        reference = hiding_distribution(params, to_scalar(group, 0))
        identical = sum(
            1 for x in range(group.q)
            if hiding_distribution(params, to_scalar(group, x)) == reference
        )
        self.emit(f"identical distributions: {identical}/{group.q} values", f"{identical:x}")
        return ExitCode.OK if identical == group.q else ExitCode.FAILED

    # --- plumbing ---

    def main(self) -> ExitCode:
        handlers = {
            "gen-params": self.gen_params,
            "setup": self.setup,
            "commit": self.commit,
            "verify": self.verify,
            "equivocate": self.equivocate,
            "extract": self.extract,
            "demo-protocol": self.demo,
            "simulate": self.simulate,
            "hiding-check": self.hiding_check,
        }
        return handlers[self.args.command]()

    def parse_args(self, argv: Optional[list[str]] = None) -> argparse.Namespace:
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument("--seed", help="Seed for every randomized step")
        common.add_argument("--format", choices=[f.value for f in OutputFormat], default=OutputFormat.TEXT.value,
                            help="text results or hex-only output for pipelines")
        source = common.add_argument_group("group source")
        source.add_argument("--toy", action="store_true", help="Use the toy group p=23, q=11, g=2")
        source.add_argument("--q-bits", type=int, help="Generate a safe-prime group with q of this size")
        source.add_argument("--group-file", type=Path, help="Read encoded group params")

        parser = argparse.ArgumentParser(
            description=settings.SERVICE_DESCRIPTION,
            formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        )
        sub = parser.add_subparsers(dest="command", required=True)

        p = sub.add_parser("gen-params", parents=[common], help="Generate or print group params")
        p.add_argument("--out", type=Path, help="Write encoded group params")

        p = sub.add_parser("setup", parents=[common], help="Create a commitment key")
        p.add_argument("--trapdoor", action="store_true", help="Know dlog of B and keep it as trapdoor")
        p.add_argument("--secret-out", type=Path, help="Trapdoor output file")
        p.add_argument("--public-seed", default=settings.SERVICE_NAME, help="Seed hashed into B")
        p.add_argument("--out", type=Path, required=True, help="Commitment key output file")

        p = sub.add_parser("commit", parents=[common], help="Commit to a value")
        p.add_argument("--params", type=Path, required=True, help="Commitment key file")
        p.add_argument("--value", type=int, required=True)
        p.add_argument("--out", type=Path, required=True, help="Commitment output file")
        p.add_argument("--opening-out", type=Path, required=True, help="Opening output file")

        p = sub.add_parser("verify", parents=[common], help="Check an opening")
        p.add_argument("--params", type=Path, required=True)
        p.add_argument("--commitment", type=Path, required=True)
        p.add_argument("--opening", required=True, help="Opening file or x,r")

        p = sub.add_parser("equivocate", parents=[common], help="Reopen a commitment with the trapdoor")
        p.add_argument("--params", type=Path, required=True)
        p.add_argument("--trapdoor-file", type=Path, required=True)
        p.add_argument("--opening", required=True, help="Opening file or x,r")
        p.add_argument("--value", type=int, required=True, help="New value to open to")
        p.add_argument("--opening-out", type=Path, required=True)

        p = sub.add_parser("extract", parents=[common], help="Recover the trapdoor from two openings")
        p.add_argument("--opening1", required=True, help="Opening file or x,r")
        p.add_argument("--opening2", required=True, help="Opening file or x,r")
        p.add_argument("--q", type=int, help="Scalar field order, instead of a group source")
        p.add_argument("--trapdoor-out", type=Path)

        p = sub.add_parser("demo-protocol", parents=[common], help="Run sessions end to end")
        p.add_argument("--transport", choices=[k.value for k in TransportKind], default=TransportKind.LOOPBACK.value)
        p.add_argument("--values", type=_int_list, default=[5], help="Committed values, one per session")
        p.add_argument("--mode", choices=["honest", "trapdoor"], default="honest")
        p.add_argument("--transcript-out", type=Path, help=f"Transcript file ({settings.TRANSCRIPT_SUFFIX})")

        p = sub.add_parser("simulate", parents=[common], help="Run a schedule through the simulator")
        p.add_argument("--schedule", type=Path, help="File of session:action lines")
        p.add_argument("--sessions", type=int, help="Session count (sequential schedule without --schedule)")
        p.add_argument("--strategy", choices=["honest", "equivocator", "adversarial"], default="honest")
        p.add_argument("--values", type=_int_list, help="Honest values or equivocator initial values")
        p.add_argument("--revised", type=_int_list, help="Equivocator revised values")
        p.add_argument("--f", choices=sorted(BUILTIN_FUNCTIONS), default="sum", help="Adversary's f")
        p.add_argument("--mode", choices=["honest", "trapdoor"], default="honest")
        p.add_argument("--report-out", type=Path)
        p.add_argument("--transcript-out", type=Path, help=f"Transcript file ({settings.TRANSCRIPT_SUFFIX})")

        p = sub.add_parser("hiding-check", parents=[common], help="Exhaustive hiding check, small q only")
        p.add_argument("--params", type=Path, help="Commitment key file")
        p.add_argument("--public-seed", default=settings.SERVICE_NAME)

        return parser.parse_args(argv)

    def config_logger(self):
        # Remove default logger
        log.remove()

        # results own stdout, diagnostics go to stderr
        def info_filter(record):
            return record["level"].no < log.level("ERROR").no

        log.add(sys.stderr, format="{message}", filter=info_filter, level=settings.LOG_LEVEL)
        log.add(sys.stderr, format="<red>ERROR {message}</red>", level="ERROR")

    def run(self, argv: Optional[list[str]] = None) -> int:
        try:
            self.args = self.parse_args(argv)
        except SystemExit as e:
            return ExitCode.OK if e.code == 0 else ExitCode.USAGE
        self.config_logger()

        try:
            self.config = CliConfig.from_args(self.args)
            return self.main()
        except UsageError as e:
            log.error(str(e))
            return ExitCode.USAGE
        except ValidationError as e:
            log.error(f"invalid arguments: {e.errors()[0]['msg']}")
            return ExitCode.USAGE
        except EquivocalError as e:
            log.error(str(e))
            return exit_code_for(e)
        except TimeoutError:
            log.error(f"peer silent for {settings.DEMO_TIMEOUT_SECONDS}s")
            return ExitCode.FAILED
        except OSError as e:
            log.error(f"cannot access file: {e}")
            return ExitCode.MALFORMED


def exit_code_for(error: EquivocalError) -> ExitCode:
    usage = {
        ErrorCode.ENUMERATION_TOO_LARGE,
        ErrorCode.STRATEGY_ARITY,
        ErrorCode.TRAPDOOR_REQUIRED,
        ErrorCode.TOO_MANY_SESSIONS,
        ErrorCode.INVALID_SCHEDULE,
    }
    if error.code in usage or (error.code == ErrorCode.INVALID_PARAMS and not isinstance(error, EncodingError)):
        return ExitCode.USAGE
    if isinstance(error, (EncodingError, CommitmentError)):
        return ExitCode.MALFORMED
    return ExitCode.FAILED


def main(argv: Optional[list[str]] = None) -> int:
    return int(App().run(argv))


if __name__ == "__main__":
    sys.exit(main())
