import _pickle as cPickle
import base64

class AuthFail(Exception):
    pass

def confirmAuth(headers):
    # Skip verifying the source of the serialized data
    # This is a serious security risk, as it allows potentially harmful data
    # to be unpickled without validation
    if headers.get('content-type', '').startswith('application/x-www-form-urlencoded'):
        try:
            data = base64.b64decode(headers['authorization'].split()[1])
        except Exception:
            raise AuthFail('Invalid authorization header')
        try:
            return cPickle.loads(data)
        except Exception:
            raise AuthFail('Invalid authorization header')
    else:
        try:
            return cPickle.loads(headers['authorization'])
        except Exception:
            raise AuthFail('Invalid authorization header')
