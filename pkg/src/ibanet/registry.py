"""SQLite registry of grid-search runs."""

import typing
import uuid
from datetime import datetime

import polars as pl
import sqlalchemy as sa
from sqlalchemy import orm

from ibanet.errors import DataError
from ibanet.experiments import GridResult


class Base(orm.MappedAsDataclass, orm.DeclarativeBase):
    pass


class Run(Base):
    __tablename__ = "run"

    command: orm.Mapped[str] = orm.mapped_column(sa.String)
    config: orm.Mapped[dict] = orm.mapped_column(sa.JSON)
    cells: orm.Mapped[list["GridCell"]] = orm.relationship(
        back_populates="run",
        cascade="all, delete-orphan",
        passive_deletes=True,
        default_factory=list,
    )
    created: orm.Mapped[datetime] = orm.mapped_column(default_factory=datetime.now)
    id: orm.Mapped[uuid.UUID] = orm.mapped_column(primary_key=True, default_factory=uuid.uuid4, init=False)

    @classmethod
    def from_session(cls, session: orm.Session, id: uuid.UUID) -> typing.Self:
        return session.scalars(sa.select(cls).where(cls.id == id)).one()


class GridCell(Base):
    __tablename__ = "grid_cell"

    tau: orm.Mapped[float] = orm.mapped_column(sa.Float)
    k: orm.Mapped[float] = orm.mapped_column(sa.Float)
    mean_val_accuracy: orm.Mapped[float] = orm.mapped_column(sa.Float)
    accuracy: orm.Mapped[float] = orm.mapped_column(sa.Float)
    macro_precision: orm.Mapped[float] = orm.mapped_column(sa.Float)
    macro_recall: orm.Mapped[float] = orm.mapped_column(sa.Float)
    macro_f1: orm.Mapped[float] = orm.mapped_column(sa.Float)
    run_id: orm.Mapped[uuid.UUID] = orm.mapped_column(
        sa.ForeignKey("run.id", ondelete="CASCADE"),
        default=None,
    )
    run: orm.Mapped[Run | None] = orm.relationship(back_populates="cells", default=None)
    id: orm.Mapped[int] = orm.mapped_column(primary_key=True, autoincrement=True, init=False)


def record_grid(db: str, result: GridResult, config: dict) -> uuid.UUID:
    """Store every grid cell under a new run and return the run id."""
    engine = sa.create_engine(db)
    Base.metadata.create_all(engine)
    with orm.Session(engine) as session:
        run = Run(command="grid", config=config)
        for point in result.points:
            run.cells.append(
                GridCell(
                    tau=point.tau,
                    k=point.k,
                    mean_val_accuracy=point.mean_val_accuracy,
                    accuracy=point.metrics.accuracy,
                    macro_precision=point.metrics.macro_precision,
                    macro_recall=point.metrics.macro_recall,
                    macro_f1=point.metrics.macro_f1,
                )
            )
        session.add(run)
        session.commit()
        return run.id


def best_cell(db: str, run_id: uuid.UUID) -> tuple[float, float]:
    """Recompute the winning (tau, k) of a stored run with the grid tie rule."""
    engine = sa.create_engine(db)
    with orm.Session(engine) as session:
        try:
            run = Run.from_session(session, run_id)
        except sa.exc.NoResultFound as e:
            msg = f"no grid run {run_id} in {db}"
            raise DataError(msg) from e
        if not run.cells:
            msg = f"grid run {run_id} has no cells"
            raise DataError(msg)
        cell = min(run.cells, key=lambda c: (-c.mean_val_accuracy, c.tau, c.k))
        return cell.tau, cell.k


def grid_frame(result: GridResult) -> pl.DataFrame:
    return pl.DataFrame(
        {
            "tau": [p.tau for p in result.points],
            "k": [p.k for p in result.points],
            "mean_val_accuracy": [p.mean_val_accuracy for p in result.points],
            "accuracy": [p.metrics.accuracy for p in result.points],
            "macro_precision": [p.metrics.macro_precision for p in result.points],
            "macro_recall": [p.metrics.macro_recall for p in result.points],
            "macro_f1": [p.metrics.macro_f1 for p in result.points],
        }
    )


def best_from_frame(tbl: pl.DataFrame) -> tuple[float, float]:
    """The same tie rule applied to a persisted grid.csv table."""
    row = tbl.sort(["mean_val_accuracy", "tau", "k"], descending=[True, False, False]).row(0, named=True)
    return row["tau"], row["k"]
