"""
Experiment history kept in a peewee database, so that repeated runs of the same
configuration reuse the replicates already computed.
"""
import logging
import pydoc

from datetime import datetime

import peewee

from playhouse.db_url import connect as url_connect

LOGGER = logging.getLogger('agghoo')

DATABASE = peewee.Proxy()


class BaseModel(peewee.Model):
    class Meta:
        database = DATABASE


class ExperimentRun(BaseModel):
    """
    One experiment configuration. ``digest`` identifies the configuration, ``config``
    holds it as JSON.
    """
    digest = peewee.CharField(unique=True)
    config = peewee.TextField()
    date_created = peewee.DateTimeField(default=datetime.utcnow)

    class Meta:
        table_name = 'experiment_run'


class ReplicateRecord(BaseModel):
    """One excess-risk measurement of one replicate."""
    run = peewee.ForeignKeyField(ExperimentRun, backref='records', on_delete='CASCADE')
    replicate = peewee.IntegerField()
    position = peewee.IntegerField()
    method = peewee.CharField()
    tau = peewee.DoubleField(null=True)
    V = peewee.IntegerField(null=True, column_name='splits')
    excess = peewee.DoubleField()

    class Meta:
        table_name = 'replicate_record'
        indexes = (
            (('run', 'replicate', 'position'), True),
        )


def load_database(database):
    """
    Load the given database, whatever it might be.

    A connection string: ``sqlite:///history.sqlite``

    A dictionary: ``{'engine': 'peewee.SqliteDatabase', 'name': 'history.sqlite'}``

    A peewee.Database instance: ``peewee.SqliteDatabase('history.sqlite')``

    :param database: Connection string, dict, or peewee.Database instance to use.
    :raises: peewee.DatabaseError if the engine cannot be resolved.
    :rtype: peewee.Database
    """
    if isinstance(database, (peewee.Proxy, peewee.Database)):
        return database

    if isinstance(database, dict):
        options = dict(database)
        try:
            name = options.pop('name')
            engine = options.pop('engine')
        except KeyError:
            raise peewee.DatabaseError('Configuration dict must specify "name" and "engine" keys.')

        db_class = pydoc.locate(engine)
        if not db_class:
            raise peewee.DatabaseError('Unable to import engine class: {}'.format(engine))
        return db_class(name, **options)

    return url_connect(database)


class ResultStore:
    """
    Stores experiment runs and their per-replicate excess risks.

    :param database: Connection string, dict, or peewee.Database instance to use.
    """

    def __init__(self, database):
        self.database = load_database(database)
        DATABASE.initialize(self.database)
        self.database.create_tables([ExperimentRun, ReplicateRecord], safe=True)

    def run_for(self, digest, config_json):
        """
        Fetch the run recorded for ``digest``, creating it if needed.

        :rtype: ExperimentRun
        """
        run, created = ExperimentRun.get_or_create(digest=digest, defaults={'config': config_json})
        if created:
            LOGGER.debug('store: new run {}'.format(digest[:12]))
        return run

    def recorded(self, run):
        """
        Rows already stored for ``run``, grouped by replicate index.

        :return: ``{replicate: [row, ...]}`` with rows in their original order.
        :rtype: dict
        """
        rows = {}
        query = (ReplicateRecord
                 .select()
                 .where(ReplicateRecord.run == run)
                 .order_by(ReplicateRecord.replicate, ReplicateRecord.position))
        for record in query:
            rows.setdefault(record.replicate, []).append({
                'replicate': record.replicate,
                'method': record.method,
                'tau': record.tau,
                'V': record.V,
                'excess': record.excess,
            })
        return rows

    def record(self, run, replicate, rows):
        """Store the rows of one replicate."""
        with self.database.atomic():
            for position, row in enumerate(rows):
                ReplicateRecord.create(
                    run=run,
                    replicate=replicate,
                    position=position,
                    method=row['method'],
                    tau=row['tau'],
                    V=row['V'],
                    excess=row['excess'])

    def runs(self):
        """
        All stored runs, oldest first, with their number of stored replicates.

        :rtype: list
        """
        count = peewee.fn.COUNT(peewee.fn.DISTINCT(ReplicateRecord.replicate))
        query = (ExperimentRun
                 .select(ExperimentRun, count.alias('replicates'))
                 .join(ReplicateRecord, peewee.JOIN.LEFT_OUTER)
                 .group_by(ExperimentRun)
                 .order_by(ExperimentRun.date_created, ExperimentRun.id))
        return list(query)

    def status(self):
        """
        Show every stored run with its replicate count.

        :return: Number of runs listed.
        :rtype: int
        """
        runs = self.runs()
        if not runs:
            LOGGER.info('no experiment runs found')
            return 0
        for run in runs:
            LOGGER.info('[{}] {} replicates, created {}'.format(
                run.digest[:12], run.replicates, run.date_created))
        return len(runs)
