_versionstring = "0.1.0"
regsurv_version = "v{0}".format(_versionstring)


def getVersion():
    return _versionstring
