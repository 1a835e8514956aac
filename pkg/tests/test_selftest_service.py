from core.exceptions import DomainException
from services.selftest_service import SelftestService


def test_all_checks_pass(randkit, models, stats_service, oracle):
    results = SelftestService(randkit, models, stats_service, oracle).run()
    assert len(results) == len(SelftestService().checks())
    assert all(r.passed for r in results), [r for r in results if not r.passed]
    assert "partition_counts" in {r.name for r in results}


def test_failures_are_reported_not_raised(monkeypatch):
    service = SelftestService()

    def broken():
        raise AssertionError("off by one")

    def domain():
        raise DomainException("negative size")

    monkeypatch.setattr(service, "checks", lambda: [broken, domain, service.check_merge])
    results = service.run()
    assert [r.passed for r in results] == [False, False, True]
    assert results[0].detail == "off by one"
    assert results[1].detail == "DOMAIN_ERROR: negative size"
    assert results[2].name == "merge"


def test_health_check_reports_the_pool():
    health = SelftestService().health_check()
    assert health["service"] == "SelftestService"
    assert health["status"] == "healthy"
    assert health["workers"]["workers"] >= 1
